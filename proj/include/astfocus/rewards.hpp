#ifndef ASTFOCUS_REWARDS_HPP_
#define ASTFOCUS_REWARDS_HPP_

#include <span>
#include <vector>

#include "astfocus/tensor.hpp"

namespace astfocus {

struct RewardWeights {
  double lambda1 = 0.2;  // edgebox term of the spatial reward
  double lambda2 = 0.4;  // sparse term of the temporal reward
  double lambda3 = 0.6;  // representative term of the temporal reward
};

struct RewardBundle {
  double common = 0.0;
  double edgebox = 0.0;
  double sparse = 0.0;
  double representative = 0.0;
  double spatial_total = 0.0;
  double temporal_total = 0.0;
  double value_prev = 0.0;
  double value_curr = 0.0;
};

inline constexpr double kDefaultEdgeThreshold = 0.1;

// Edge pixels of one frame (luminance gradient magnitude above a threshold)
// grouped into 8-connected components.
class EdgeGroups {
 public:
  EdgeGroups(const Video& video, int frame, double threshold = kDefaultEdgeThreshold);

  struct Group {
    int top, left, bottom, right;  // inclusive bounding box
    double magnitude_sum;
  };

  int height() const { return height_; }
  int width() const { return width_; }
  const std::vector<Group>& groups() const { return groups_; }
  // -1 for non-edge pixels.
  int label(int row, int col) const {
    return labels_[static_cast<std::size_t>(row) * width_ + col];
  }

 private:
  int height_;
  int width_;
  std::vector<int> labels_;
  std::vector<Group> groups_;
};

// Sum of the magnitudes of edge groups lying wholly inside the rect, divided
// by 2 (w + h)^2. Throws kRectOutOfBounds.
double objectness_reward(const EdgeGroups& edges, const PatchRect& rect);
double objectness_reward(const Video& video, int frame, const PatchRect& rect,
                         double threshold = kDefaultEdgeThreshold);

// Per-frame, per-patch objectness values for one clean video.
class ObjectnessTable {
 public:
  ObjectnessTable() = default;
  ObjectnessTable(const Video& video, const PatchGrid& grid,
                  double threshold = kDefaultEdgeThreshold);

  double at(int frame, int patch) const {
    return values_[static_cast<std::size_t>(frame)][static_cast<std::size_t>(patch)];
  }
  int frames() const { return static_cast<int>(values_.size()); }

 private:
  std::vector<std::vector<double>> values_;
};

// Sum of objectness over the frames selected by `frames`; unselected frames
// contribute nothing.
double edgebox_reward(const ObjectnessTable& table, const SpatialAction& patches,
                      const TemporalAction& frames);
double edgebox_reward(const Video& video, const PatchGrid& grid,
                      const SpatialAction& patches, const TemporalAction& frames,
                      double threshold = kDefaultEdgeThreshold);

// exp(score_target - score_true)
double common_value(double score_target, double score_true);
// Relative change; throws kNonpositivePrevValue.
double common_reward(double value_curr, double value_prev);
// exp(-|selected - L| / M); throws kInvalidBound unless 1 <= L < M.
double sparse_reward(const TemporalAction& frames, int upper_bound);
// exp(-(1/M) sum_i min_{t in selected} ||e_i - e_t||); throws kEmptySelection.
double representative_reward(std::span<const std::vector<double>> features,
                             const TemporalAction& frames);

struct RewardTotals {
  double spatial = 0.0;
  double temporal = 0.0;
};
RewardTotals reward_totals(const RewardBundle& parts, const RewardWeights& weights);

}  // namespace astfocus

#endif  // ASTFOCUS_REWARDS_HPP_
