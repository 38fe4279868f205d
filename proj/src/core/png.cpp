#include "core/png.hpp"

#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

#include "core/errors.hpp"

namespace dnr {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_thrower(png_structp, png_const_charp msg) {
  throw IoError(std::string("png: ") + msg);
}

void png_warning_sink(png_structp, png_const_charp) {}

}  // namespace

RgbPatch read_png_rgb8(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_thrower, png_warning_sink);
  if (!png) throw IoError("png: read struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: info struct allocation failed");
  }

  RgbPatch patch;
  try {
    png_init_io(png, file.get());
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    if (png_get_channels(png, info) != 3 || png_get_bit_depth(png, info) != 8)
      throw IoError(path + ": not reducible to 8-bit RGB");

    patch.width = static_cast<int>(png_get_image_width(png, info));
    patch.height = static_cast<int>(png_get_image_height(png, info));
    patch.pixels.resize(static_cast<std::size_t>(patch.width) * patch.height *
                        3);
    std::vector<png_bytep> rows(patch.height);
    for (int r = 0; r < patch.height; ++r)
      rows[r] = patch.pixels.data() +
                static_cast<std::size_t>(r) * patch.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return patch;
}

void write_png_rgb8(const std::string& path, const RgbPatch& patch) {
  validate_patch(patch);
  const std::string tmp = path + ".tmp";
  FilePtr file(std::fopen(tmp.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + tmp + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_thrower,
                                            png_warning_sink);
  if (!png) throw IoError("png: write struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: info struct allocation failed");
  }

  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(patch.width),
                 static_cast<png_uint_32>(patch.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_const_bytep> rows(patch.height);
    for (int r = 0; r < patch.height; ++r)
      rows[r] = patch.pixels.data() +
                static_cast<std::size_t>(r) * patch.width * 3;
    png_write_rows(png, const_cast<png_bytepp>(rows.data()),
                   static_cast<png_uint_32>(patch.height));
    png_write_end(png, info);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    std::remove(tmp.c_str());
    throw;
  }
  png_destroy_write_struct(&png, &info);
  file.reset();
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot rename " + tmp + " to " + path);
  }
}

}  // namespace dnr
