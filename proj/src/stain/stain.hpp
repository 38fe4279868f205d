#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace dnr {

struct RgbPatch {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved r,g,b per pixel, row-major
};

// Two-channel stain concentration image, interleaved (h, e) per pixel.
struct HePatch {
  int width = 0;
  int height = 0;
  std::vector<double> channels;
};

struct StainMatrix {
  Eigen::Vector3d h;  // hematoxylin direction in OD space, unit norm
  Eigen::Vector3d e;  // eosin direction, unit norm
};

void validate_patch(const RgbPatch& patch);
void validate_stains(const StainMatrix& stains);

// Beer-Lambert optical density, one row per pixel. The +1 guards log(0).
Eigen::MatrixX3d rgb_to_od(const RgbPatch& patch,
                           double background_intensity = 255.0);

// Macenko: foreground OD pixels are projected on the top-2 principal plane
// and the (p, 100-p) percentile angle directions become the stain vectors.
StainMatrix estimate_stain_matrix(const Eigen::MatrixX3d& od,
                                  double od_threshold = 0.15,
                                  double angle_percentile = 1.0);

// Per-pixel non-negative least squares against [h e].
HePatch deconvolve(const Eigen::MatrixX3d& od, const StainMatrix& stains,
                   int width, int height);

HePatch transform_patch(const RgbPatch& patch, StainMatrix* stains_out = nullptr,
                        double background_intensity = 255.0,
                        double od_threshold = 0.15,
                        double angle_percentile = 1.0);

}  // namespace dnr
