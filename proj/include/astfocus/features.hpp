#ifndef ASTFOCUS_FEATURES_HPP_
#define ASTFOCUS_FEATURES_HPP_

#include <span>
#include <vector>

#include "astfocus/tensor.hpp"

namespace astfocus {

// Statistics pooled over a region: mean luminance, mean R, mean G, mean B and
// edge energy (mean central-difference gradient magnitude of luminance).
inline constexpr int kRegionStats = 5;

// Luminance of a single frame as a height x width plane, (R+G+B)/3.
class LumaPlane {
 public:
  LumaPlane(const Video& video, int frame);

  int height() const { return height_; }
  int width() const { return width_; }
  double at(int row, int col) const {
    return values_[static_cast<std::size_t>(row) * width_ + col];
  }
  // Central differences; neighbours are clamped to the frame border.
  double gradient_magnitude(int row, int col) const;

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

// 5 * G * G values, cell-major, G x G cells row-major.
struct FrameFeatures {
  int cells_per_side = 0;
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
};

struct PatchFeatures {
  std::vector<double> values;  // kRegionStats entries
};

// Cells partition the frame evenly; the remainder rows/cols go to the last
// cell of each axis.
FrameFeatures extract_frame_features(const Video& video, int frame, int cells_per_side);

// Throws kRectOutOfBounds.
PatchFeatures extract_patch_features(const Video& video, int frame, const PatchRect& rect);

std::vector<FrameFeatures> extract_all_frame_features(const Video& video,
                                                      int cells_per_side);

// Elementwise mean over frames.
std::vector<double> global_feature(std::span<const FrameFeatures> frames);

}  // namespace astfocus

#endif  // ASTFOCUS_FEATURES_HPP_
