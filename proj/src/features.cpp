#include "astfocus/features.hpp"

#include <algorithm>
#include <cmath>

#include "astfocus/error.hpp"

namespace astfocus {

LumaPlane::LumaPlane(const Video& video, int frame)
    : height_(video.shape().height), width_(video.shape().width) {
  values_.resize(static_cast<std::size_t>(height_) * width_);
  const auto base = video.shape().index(frame, 0, 0, 0);
  for (std::size_t p = 0; p < values_.size(); ++p) {
    const auto o = base + p * kChannels;
    values_[p] = (video[o] + video[o + 1] + video[o + 2]) / 3.0;
  }
}

double LumaPlane::gradient_magnitude(int row, int col) const {
  const int l = std::max(col - 1, 0);
  const int r = std::min(col + 1, width_ - 1);
  const int u = std::max(row - 1, 0);
  const int d = std::min(row + 1, height_ - 1);
  const double gx = (at(row, r) - at(row, l)) / 2.0;
  const double gy = (at(d, col) - at(u, col)) / 2.0;
  return std::sqrt(gx * gx + gy * gy);
}

namespace {

void pool_region(const Video& video, const LumaPlane& luma, int frame, int top,
                 int left, int height, int width, double* out) {
  double sum[kChannels] = {0.0, 0.0, 0.0};
  double edge = 0.0;
  for (int row = top; row < top + height; ++row) {
    for (int col = left; col < left + width; ++col) {
      const auto o = video.shape().index(frame, row, col, 0);
      for (int c = 0; c < kChannels; ++c) sum[c] += video[o + c];
      edge += luma.gradient_magnitude(row, col);
    }
  }
  const double n = static_cast<double>(height) * width;
  out[0] = (sum[0] + sum[1] + sum[2]) / (3.0 * n);
  out[1] = sum[0] / n;
  out[2] = sum[1] / n;
  out[3] = sum[2] / n;
  out[4] = edge / n;
}

}  // namespace

FrameFeatures extract_frame_features(const Video& video, int frame, int cells_per_side) {
  const auto& s = video.shape();
  if (cells_per_side < 1 || cells_per_side > std::min(s.height, s.width)) {
    throw Error(ErrorCode::kInvalidArgument,
                "cells per side must lie in [1, min(H,W)]");
  }
  const LumaPlane luma(video, frame);
  const int g = cells_per_side;
  const int ch = s.height / g;
  const int cw = s.width / g;
  FrameFeatures f;
  f.cells_per_side = g;
  f.values.resize(static_cast<std::size_t>(kRegionStats) * g * g);
  for (int gy = 0; gy < g; ++gy) {
    const int top = gy * ch;
    const int h = gy == g - 1 ? s.height - top : ch;
    for (int gx = 0; gx < g; ++gx) {
      const int left = gx * cw;
      const int w = gx == g - 1 ? s.width - left : cw;
      pool_region(video, luma, frame, top, left, h, w,
                  f.values.data() + static_cast<std::size_t>(gy * g + gx) * kRegionStats);
    }
  }
  return f;
}

PatchFeatures extract_patch_features(const Video& video, int frame, const PatchRect& rect) {
  if (!rect.fits(video.shape().height, video.shape().width)) {
    throw Error(ErrorCode::kRectOutOfBounds, "patch outside frame");
  }
  const LumaPlane luma(video, frame);
  PatchFeatures p;
  p.values.resize(kRegionStats);
  pool_region(video, luma, frame, rect.top, rect.left, rect.height, rect.width,
              p.values.data());
  return p;
}

std::vector<FrameFeatures> extract_all_frame_features(const Video& video,
                                                      int cells_per_side) {
  std::vector<FrameFeatures> out;
  out.reserve(static_cast<std::size_t>(video.shape().frames));
  for (int f = 0; f < video.shape().frames; ++f) {
    out.push_back(extract_frame_features(video, f, cells_per_side));
  }
  return out;
}

std::vector<double> global_feature(std::span<const FrameFeatures> frames) {
  if (frames.empty()) throw Error(ErrorCode::kInvalidArgument, "no frames");
  std::vector<double> mean(frames[0].values.size(), 0.0);
  for (const auto& f : frames) {
    if (f.values.size() != mean.size()) {
      throw Error(ErrorCode::kShapeMismatch, "frame feature dims differ");
    }
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f.values[i];
  }
  for (double& v : mean) v /= static_cast<double>(frames.size());
  return mean;
}

}  // namespace astfocus
