#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dnr {

// Dense float32 tensor, row-major. On disk: magic "DNRB", version u32,
// rank u32, dims u32[rank], payload f32, all little-endian.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

Tensor tensor_from_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd tensor_to_matrix(const Tensor& t);  // rank-2 only

std::string tensor_to_bytes(const Tensor& t);
Tensor tensor_from_bytes(const std::string& bytes, const std::string& origin);

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace dnr
