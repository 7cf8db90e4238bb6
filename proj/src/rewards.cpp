#include "astfocus/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "astfocus/error.hpp"
#include "astfocus/features.hpp"

namespace astfocus {

EdgeGroups::EdgeGroups(const Video& video, int frame, double threshold)
    : height_(video.shape().height), width_(video.shape().width) {
  const LumaPlane luma(video, frame);
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  std::vector<double> mag(n);
  labels_.assign(n, -1);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      mag[static_cast<std::size_t>(r) * width_ + c] = luma.gradient_magnitude(r, c);
    }
  }
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (labels_[seed] != -1 || !(mag[seed] > threshold)) continue;
    const int id = static_cast<int>(groups_.size());
    Group g{height_, width_, -1, -1, 0.0};
    labels_[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int r = static_cast<int>(p / width_);
      const int c = static_cast<int>(p % width_);
      g.top = std::min(g.top, r);
      g.bottom = std::max(g.bottom, r);
      g.left = std::min(g.left, c);
      g.right = std::max(g.right, c);
      g.magnitude_sum += mag[p];
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= height_ || cc >= width_) continue;
          const std::size_t q = static_cast<std::size_t>(rr) * width_ + cc;
          if (labels_[q] == -1 && mag[q] > threshold) {
            labels_[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    groups_.push_back(g);
  }
}

double objectness_reward(const EdgeGroups& edges, const PatchRect& rect) {
  if (!rect.fits(edges.height(), edges.width())) {
    throw Error(ErrorCode::kRectOutOfBounds, "objectness rect outside frame");
  }
  // A group lying wholly inside the rect contributes all of its magnitude.
  double total = 0.0;
  for (const auto& g : edges.groups()) {
    if (rect.contains(g.top, g.left) && rect.contains(g.bottom, g.right)) {
      total += g.magnitude_sum;
    }
  }
  const double perimeter = static_cast<double>(rect.width + rect.height);
  return total / (2.0 * perimeter * perimeter);
}

double objectness_reward(const Video& video, int frame, const PatchRect& rect,
                         double threshold) {
  return objectness_reward(EdgeGroups(video, frame, threshold), rect);
}

ObjectnessTable::ObjectnessTable(const Video& video, const PatchGrid& grid,
                                 double threshold) {
  for (int f = 0; f < video.shape().frames; ++f) {
    const EdgeGroups edges(video, f, threshold);
    std::vector<double> row;
    row.reserve(grid.size());
    for (const auto& rect : grid.rects) row.push_back(objectness_reward(edges, rect));
    values_.push_back(std::move(row));
  }
}

double edgebox_reward(const ObjectnessTable& table, const SpatialAction& patches,
                      const TemporalAction& frames) {
  if (static_cast<int>(patches.frames()) != table.frames() ||
      static_cast<int>(frames.frames()) != table.frames()) {
    throw Error(ErrorCode::kShapeMismatch, "edgebox action length");
  }
  double total = 0.0;
  for (int f = 0; f < table.frames(); ++f) {
    if (frames.bits[static_cast<std::size_t>(f)]) {
      total += table.at(f, patches.patches[static_cast<std::size_t>(f)]);
    }
  }
  return total;
}

double edgebox_reward(const Video& video, const PatchGrid& grid,
                      const SpatialAction& patches, const TemporalAction& frames,
                      double threshold) {
  const int m = video.shape().frames;
  if (static_cast<int>(patches.frames()) != m || static_cast<int>(frames.frames()) != m) {
    throw Error(ErrorCode::kShapeMismatch, "edgebox action length");
  }
  double total = 0.0;
  for (int f = 0; f < m; ++f) {
    if (!frames.bits[static_cast<std::size_t>(f)]) continue;
    const auto idx = static_cast<std::size_t>(patches.patches[static_cast<std::size_t>(f)]);
    total += objectness_reward(video, f, grid.rects.at(idx), threshold);
  }
  return total;
}

double common_value(double score_target, double score_true) {
  return std::exp(score_target - score_true);
}

double common_reward(double value_curr, double value_prev) {
  if (!(value_prev > 0.0)) {
    throw Error(ErrorCode::kNonpositivePrevValue, std::to_string(value_prev));
  }
  return (value_curr - value_prev) / value_prev;
}

double sparse_reward(const TemporalAction& frames, int upper_bound) {
  const int m = static_cast<int>(frames.frames());
  if (upper_bound < 1 || upper_bound >= m) {
    throw Error(ErrorCode::kInvalidBound, "need 1 <= L < M, got L=" +
                                              std::to_string(upper_bound) +
                                              " M=" + std::to_string(m));
  }
  return std::exp(-std::abs(frames.selected() - upper_bound) / static_cast<double>(m));
}

double representative_reward(std::span<const std::vector<double>> features,
                             const TemporalAction& frames) {
  if (features.size() != frames.frames()) {
    throw Error(ErrorCode::kShapeMismatch, "feature count differs from action length");
  }
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < frames.frames(); ++i) {
    if (frames.bits[i]) selected.push_back(i);
  }
  if (selected.empty()) throw Error(ErrorCode::kEmptySelection, "no key frame");
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t : selected) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < features[i].size(); ++k) {
        const double d = features[i][k] - features[t][k];
        d2 += d * d;
      }
      best = std::min(best, std::sqrt(d2));
    }
    total += best;
  }
  return std::exp(-total / static_cast<double>(features.size()));
}

RewardTotals reward_totals(const RewardBundle& parts, const RewardWeights& weights) {
  return {parts.common + weights.lambda1 * parts.edgebox,
          parts.common + weights.lambda2 * parts.sparse +
              weights.lambda3 * parts.representative};
}

}  // namespace astfocus
