#include "core/tensor.hpp"

#include <cstring>
#include <limits>

#include "core/errors.hpp"
#include "core/io.hpp"

namespace dnr {

namespace {

constexpr char kMagic[4] = {'D', 'N', 'R', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.append(b, 4);
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
  auto b = [&](std::size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i]));
  };
  return b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
}

}  // namespace

Tensor tensor_from_matrix(const Eigen::MatrixXd& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()),
            static_cast<std::uint32_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data[static_cast<std::size_t>(r * m.cols() + c)] =
          static_cast<float>(m(r, c));
  return t;
}

Eigen::MatrixXd tensor_to_matrix(const Tensor& t) {
  if (t.dims.size() != 2)
    throw InvalidInput("expected a rank-2 tensor, got rank " +
                       std::to_string(t.dims.size()));
  Eigen::MatrixXd m(t.dims[0], t.dims[1]);
  for (std::uint32_t r = 0; r < t.dims[0]; ++r)
    for (std::uint32_t c = 0; c < t.dims[1]; ++c)
      m(r, c) = t.data[static_cast<std::size_t>(r) * t.dims[1] + c];
  return m;
}

std::string tensor_to_bytes(const Tensor& t) {
  if (t.data.size() != t.element_count())
    throw InvalidInput("tensor payload does not match its dims");
  std::string out;
  out.reserve(16 + 4 * t.dims.size() + 4 * t.data.size());
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
  for (float f : t.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

Tensor tensor_from_bytes(const std::string& bytes, const std::string& origin) {
  auto fail = [&](const std::string& why) -> Tensor {
    throw InvalidInput(origin + ": " + why);
  };
  if (bytes.size() < 12) return fail("truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) return fail("bad magic");
  std::uint32_t version = get_u32(bytes, 4);
  if (version != kVersion)
    return fail("unsupported version " + std::to_string(version));
  std::uint32_t rank = get_u32(bytes, 8);
  if (rank > 8) return fail("implausible rank " + std::to_string(rank));
  if (bytes.size() < 12 + 4ull * rank) return fail("truncated dims");
  Tensor t;
  t.dims.resize(rank);
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims[i] = get_u32(bytes, 12 + 4ull * i);
    n *= t.dims[i];
  }
  std::size_t off = 12 + 4ull * rank;
  if (bytes.size() - off != 4 * n)
    return fail("payload length " + std::to_string(bytes.size() - off) +
                " does not match dims (want " + std::to_string(4 * n) + ")");
  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = get_u32(bytes, off + 4 * i);
    std::memcpy(&t.data[i], &bits, 4);
  }
  return t;
}

void write_tensor(const std::string& path, const Tensor& t) {
  atomic_write_file(path, tensor_to_bytes(t));
}

Tensor read_tensor(const std::string& path) {
  return tensor_from_bytes(read_file(path), path);
}

}  // namespace dnr
