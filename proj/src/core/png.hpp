#pragma once

#include <string>

#include "stain/stain.hpp"

namespace dnr {

// 8-bit RGB only; palette, gray, 16-bit, and alpha inputs are converted on
// read. Writes are atomic (temp file + rename).
RgbPatch read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const RgbPatch& patch);

}  // namespace dnr
