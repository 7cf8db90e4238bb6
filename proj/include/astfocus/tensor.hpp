#ifndef ASTFOCUS_TENSOR_HPP_
#define ASTFOCUS_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace astfocus {

inline constexpr int kChannels = 3;

// Frames x height x width x 3, frame-major then row-major, channel fastest.
struct VideoShape {
  int frames = 0;
  int height = 0;
  int width = 0;

  std::size_t pixels_per_frame() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t size() const {
    return static_cast<std::size_t>(frames) * pixels_per_frame() * kChannels;
  }
  std::size_t index(int frame, int row, int col, int channel) const {
    return ((static_cast<std::size_t>(frame) * height + row) * width + col) *
               kChannels +
           channel;
  }
  bool valid() const { return frames >= 1 && height >= 1 && width >= 1; }

  friend bool operator==(const VideoShape&, const VideoShape&) = default;
};

// Video-shaped signed reals: perturbations, gradients, unprojected candidates.
class Volume {
 public:
  Volume() = default;
  explicit Volume(VideoShape shape, double fill = 0.0);
  Volume(VideoShape shape, std::vector<double> data);

  const VideoShape& shape() const { return shape_; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::size_t size() const { return data_.size(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(int frame, int row, int col, int channel) const {
    return data_[shape_.index(frame, row, col, channel)];
  }

  double max_abs() const;
  std::size_t count_nonzero() const;

 private:
  VideoShape shape_;
  std::vector<double> data_;
};

// A video whose every value lies in [0,1]. The invariant is checked on
// construction; the only other way to obtain one is project().
class Video {
 public:
  Video() = default;
  Video(VideoShape shape, std::vector<double> data);
  static Video filled(VideoShape shape, double value);

  const VideoShape& shape() const { return values_.shape(); }
  std::span<const double> data() const { return values_.data(); }
  const Volume& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double at(int frame, int row, int col, int channel) const {
    return values_.at(frame, row, col, channel);
  }

 private:
  Volume values_;
};

Volume operator-(const Video& a, const Video& b);

struct PatchRect {
  int top = 0;
  int left = 0;
  int height = 1;
  int width = 1;

  bool fits(int frame_height, int frame_width) const {
    return top >= 0 && left >= 0 && height >= 1 && width >= 1 &&
           top + height <= frame_height && left + width <= frame_width;
  }
  bool contains(int row, int col) const {
    return row >= top && row < top + height && col >= left &&
           col < left + width;
  }
  friend bool operator==(const PatchRect&, const PatchRect&) = default;
};

struct PatchGrid {
  std::vector<PatchRect> rects;
  int stride = 1;
  int frame_height = 0;
  int frame_width = 0;
  int patch_height = 0;
  int patch_width = 0;

  std::size_t size() const { return rects.size(); }
};

// Row-major sliding-window enumeration. Throws kPatchLargerThanFrame.
PatchGrid make_patch_grid(int frame_height, int frame_width, int patch_height,
                          int patch_width, int stride);

// Stride used when none is configured: 53 on 224-pixel frames with 65-pixel
// patches (4x4 layout), the patch size otherwise.
int default_stride(int frame_extent, int patch_extent);

// Per-frame agent actions.
struct TemporalAction {
  std::vector<std::uint8_t> bits;

  std::size_t frames() const { return bits.size(); }
  int selected() const;
};

struct SpatialAction {
  std::vector<int> patches;

  std::size_t frames() const { return patches.size(); }
};

class ReductionMask {
 public:
  ReductionMask() = default;
  ReductionMask(VideoShape shape, std::vector<std::uint8_t> bits,
                int selected_frames, int patch_height, int patch_width);

  // Every pixel of every frame.
  static ReductionMask full(VideoShape shape);

  const VideoShape& shape() const { return shape_; }
  int selected_frames() const { return selected_frames_; }
  int patch_height() const { return patch_height_; }
  int patch_width() const { return patch_width_; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  bool contains(int frame, int row, int col) const {
    return bits_[(static_cast<std::size_t>(frame) * shape_.height + row) *
                     shape_.width +
                 col] != 0;
  }

  // Number of masked pixels (channels not counted).
  std::size_t popcount() const;
  // Offsets into Video data of every masked value, channels included, in
  // storage order. The reduced space is indexed by this list.
  std::vector<std::size_t> value_indices() const;

 private:
  VideoShape shape_;
  std::vector<std::uint8_t> bits_;
  int selected_frames_ = 0;
  int patch_height_ = 0;
  int patch_width_ = 0;
};

ReductionMask build_mask(const TemporalAction& frames,
                         const SpatialAction& patches, const PatchGrid& grid,
                         VideoShape shape);

// clamp(clamp(candidate, original - eps, original + eps), 0, 1).
Video project(const Volume& candidate, const Video& original, double eps_bound);

// Mean absolute perturbation on the 0-255 scale.
double map_metric(const Volume& perturbation);

// astv1 container: one JSON header line then little-endian f32 payload.
void write_video(std::ostream& out, const Video& video);
void write_video(const std::string& path, const Video& video);
Video read_video(std::istream& in);
Video read_video(const std::string& path);

}  // namespace astfocus

#endif  // ASTFOCUS_TENSOR_HPP_
