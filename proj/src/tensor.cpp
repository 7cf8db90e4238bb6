#include "astfocus/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "astfocus/error.hpp"
#include "json.hpp"

namespace astfocus {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kPatchLargerThanFrame: return "PatchLargerThanFrame";
    case ErrorCode::kZeroFramesSelected: return "ZeroFramesSelected";
    case ErrorCode::kRectOutOfBounds: return "RectOutOfBounds";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kUnboundInput: return "UnboundInput";
    case ErrorCode::kNonScalarOutput: return "NonScalarOutput";
    case ErrorCode::kNonpositivePrevValue: return "NonpositivePrevValue";
    case ErrorCode::kInvalidBound: return "InvalidBound";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kOddSampleCount: return "OddSampleCount";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kOracleFailure: return "OracleFailure";
    case ErrorCode::kUnsupportedOracle: return "UnsupportedOracle";
    case ErrorCode::kRemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::kProtocolError: return "ProtocolError";
    case ErrorCode::kBudgetExhausted: return "BudgetExhausted";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

Volume::Volume(VideoShape shape, double fill)
    : shape_(shape), data_(shape.size(), fill) {}

Volume::Volume(VideoShape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "volume data length " +
                                               std::to_string(data_.size()) +
                                               " != " +
                                               std::to_string(shape_.size()));
  }
}

double Volume::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

std::size_t Volume::count_nonzero() const {
  return static_cast<std::size_t>(
      std::count_if(data_.begin(), data_.end(), [](double v) { return v != 0.0; }));
}

Video::Video(VideoShape shape, std::vector<double> data) {
  if (!shape.valid()) {
    throw Error(ErrorCode::kShapeMismatch, "video needs at least 1x1x1 pixels");
  }
  for (double v : data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "video value outside [0,1]");
    }
  }
  values_ = Volume(shape, std::move(data));
}

Video Video::filled(VideoShape shape, double value) {
  return Video(shape, std::vector<double>(shape.size(), value));
}

Volume operator-(const Video& a, const Video& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "video difference of unequal shapes");
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Volume(a.shape(), std::move(out));
}

PatchGrid make_patch_grid(int frame_height, int frame_width, int patch_height,
                          int patch_width, int stride) {
  if (patch_height < 1 || patch_width < 1 || stride < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "patch dims and stride must be positive");
  }
  if (patch_height > frame_height || patch_width > frame_width) {
    throw Error(ErrorCode::kPatchLargerThanFrame,
                std::to_string(patch_height) + "x" + std::to_string(patch_width) +
                    " patch in " + std::to_string(frame_height) + "x" +
                    std::to_string(frame_width) + " frame");
  }
  PatchGrid grid;
  grid.stride = stride;
  grid.frame_height = frame_height;
  grid.frame_width = frame_width;
  grid.patch_height = patch_height;
  grid.patch_width = patch_width;
  for (int top = 0; top + patch_height <= frame_height; top += stride) {
    for (int left = 0; left + patch_width <= frame_width; left += stride) {
      grid.rects.push_back({top, left, patch_height, patch_width});
    }
  }
  return grid;
}

int default_stride(int frame_extent, int patch_extent) {
  if (frame_extent == 224 && patch_extent == 65) return 53;
  return std::max(1, patch_extent);
}

int TemporalAction::selected() const {
  int n = 0;
  for (auto b : bits) n += b != 0;
  return n;
}

ReductionMask::ReductionMask(VideoShape shape, std::vector<std::uint8_t> bits,
                             int selected_frames, int patch_height,
                             int patch_width)
    : shape_(shape),
      bits_(std::move(bits)),
      selected_frames_(selected_frames),
      patch_height_(patch_height),
      patch_width_(patch_width) {
  if (bits_.size() != static_cast<std::size_t>(shape_.frames) *
                          shape_.pixels_per_frame()) {
    throw Error(ErrorCode::kShapeMismatch, "mask bit count");
  }
}

ReductionMask ReductionMask::full(VideoShape shape) {
  return ReductionMask(
      shape,
      std::vector<std::uint8_t>(
          static_cast<std::size_t>(shape.frames) * shape.pixels_per_frame(), 1),
      shape.frames, shape.height, shape.width);
}

std::size_t ReductionMask::popcount() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::vector<std::size_t> ReductionMask::value_indices() const {
  std::vector<std::size_t> out;
  out.reserve(popcount() * kChannels);
  for (std::size_t p = 0; p < bits_.size(); ++p) {
    if (!bits_[p]) continue;
    for (int c = 0; c < kChannels; ++c) out.push_back(p * kChannels + c);
  }
  return out;
}

ReductionMask build_mask(const TemporalAction& frames,
                         const SpatialAction& patches, const PatchGrid& grid,
                         VideoShape shape) {
  const auto m = static_cast<std::size_t>(shape.frames);
  if (frames.frames() != m || patches.frames() != m) {
    throw Error(ErrorCode::kShapeMismatch, "action length differs from frame count");
  }
  if (grid.frame_height != shape.height || grid.frame_width != shape.width) {
    throw Error(ErrorCode::kShapeMismatch, "grid built for another frame size");
  }
  const int selected = frames.selected();
  if (selected == 0) {
    throw Error(ErrorCode::kZeroFramesSelected, "temporal action selects no frame");
  }
  std::vector<std::uint8_t> bits(m * shape.pixels_per_frame(), 0);
  for (std::size_t f = 0; f < m; ++f) {
    if (!frames.bits[f]) continue;
    const int idx = patches.patches[f];
    if (idx < 0 || static_cast<std::size_t>(idx) >= grid.size()) {
      throw Error(ErrorCode::kInvalidArgument, "patch index out of grid");
    }
    const PatchRect& r = grid.rects[static_cast<std::size_t>(idx)];
    for (int row = r.top; row < r.top + r.height; ++row) {
      auto* line = bits.data() +
                   (f * shape.height + static_cast<std::size_t>(row)) * shape.width;
      std::fill(line + r.left, line + r.left + r.width, std::uint8_t{1});
    }
  }
  return ReductionMask(shape, std::move(bits), selected, grid.patch_height,
                       grid.patch_width);
}

Video project(const Volume& candidate, const Video& original, double eps_bound) {
  if (candidate.shape() != original.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "projection of unequal shapes");
  }
  std::vector<double> out(candidate.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double o = original[i];
    const double v = std::clamp(candidate[i], o - eps_bound, o + eps_bound);
    out[i] = std::clamp(v, 0.0, 1.0);
  }
  return Video(original.shape(), std::move(out));
}

double map_metric(const Volume& perturbation) {
  if (perturbation.size() == 0) return 0.0;
  double sum = 0.0;
  for (double v : perturbation.data()) sum += std::abs(v);
  return sum / static_cast<double>(perturbation.size()) * 255.0;
}

namespace {

constexpr const char* kMagic = "astv1";

void put_f32le(std::ostream& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void write_video(std::ostream& out, const Video& video) {
  nlohmann::ordered_json header;
  header["magic"] = kMagic;
  header["frames"] = video.shape().frames;
  header["height"] = video.shape().height;
  header["width"] = video.shape().width;
  header["channels"] = kChannels;
  header["dtype"] = "f32le";
  out << header.dump() << '\n';
  for (double v : video.data()) put_f32le(out, static_cast<float>(v));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing video payload");
}

void write_video(const std::string& path, const Video& video) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path);
  write_video(out, video);
}

Video read_video(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kFormatError, "missing astv1 header line");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("header: ") + e.what());
  }
  VideoShape shape;
  try {
    if (header.at("magic").get<std::string>() != kMagic) {
      throw Error(ErrorCode::kFormatError, "bad magic");
    }
    if (header.at("channels").get<int>() != kChannels ||
        header.at("dtype").get<std::string>() != "f32le") {
      throw Error(ErrorCode::kFormatError, "only 3-channel f32le is supported");
    }
    shape = {header.at("frames").get<int>(), header.at("height").get<int>(),
             header.at("width").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("header: ") + e.what());
  }
  if (!shape.valid()) throw Error(ErrorCode::kFormatError, "empty video shape");

  std::vector<double> data(shape.size());
  std::vector<unsigned char> raw(shape.size() * 4);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw Error(ErrorCode::kFormatError, "truncated video payload");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{raw[4 * i + b]} << (8 * b);
    const float v = std::bit_cast<float>(bits);
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::kFormatError,
                  "value outside [0,1] at offset " + std::to_string(i));
    }
    data[i] = v;
  }
  return Video(shape, std::move(data));
}

Video read_video(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return read_video(in);
}

}  // namespace astfocus
