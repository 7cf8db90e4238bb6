#include <algorithm>
#include <cmath>
#include <vector>

#include "astfocus/rewards.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace astfocus;
using astfocus::testing::error_code;

namespace {

// A white 3x3 square with its top-left corner at (top, left) on black.
Video square_video(int frames, int size, int top, int left) {
  const VideoShape shape{frames, size, size};
  std::vector<double> data(shape.size(), 0.0);
  for (int f = 0; f < frames; ++f) {
    for (int r = top; r < top + 3; ++r) {
      for (int c = left; c < left + 3; ++c) {
        for (int ch = 0; ch < kChannels; ++ch) data[shape.index(f, r, c, ch)] = 1.0;
      }
    }
  }
  return Video(shape, std::move(data));
}

// Direct evaluation: total above-threshold gradient magnitude of the frame
// over 2 (w + h)^2, valid when every edge pixel sits inside the rect.
double reference_objectness(const Video& v, int frame, const PatchRect& rect, double threshold) {
  const int h = v.shape().height;
  const int w = v.shape().width;
  auto luma = [&](int r, int c) {
    r = std::clamp(r, 0, h - 1);
    c = std::clamp(c, 0, w - 1);
    return (v.at(frame, r, c, 0) + v.at(frame, r, c, 1) + v.at(frame, r, c, 2)) / 3.0;
  };
  double total = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gx = (luma(r, c + 1) - luma(r, c - 1)) / 2.0;
      const double gy = (luma(r + 1, c) - luma(r - 1, c)) / 2.0;
      const double m = std::sqrt(gx * gx + gy * gy);
      if (m > threshold) total += m;
    }
  }
  const double p = rect.width + rect.height;
  return total / (2.0 * p * p);
}

TemporalAction frames_with(int m, int count) {
  TemporalAction a;
  a.bits.assign(static_cast<std::size_t>(m), 0);
  for (int i = 0; i < count; ++i) a.bits[static_cast<std::size_t>(i)] = 1;
  return a;
}

}  // namespace

TEST_SUITE("rewards") {

TEST_CASE("blank frame has no objectness") {
  CHECK(objectness_reward(Video::filled({1, 12, 12}, 0.0), 0, {0, 0, 6, 6}) == 0.0);
  CHECK(objectness_reward(Video::filled({1, 12, 12}, 0.7), 0, {2, 2, 6, 6}) == 0.0);
}

TEST_CASE("square inside the rect matches the reference") {
  const Video v = square_video(1, 20, 8, 8);
  const EdgeGroups edges(v, 0);
  REQUIRE(edges.groups().size() == 1);
  const PatchRect rect{6, 6, 7, 7};
  const double got = objectness_reward(v, 0, rect);
  CHECK(got > 0.0);
  CHECK(got == doctest::Approx(reference_objectness(v, 0, rect, kDefaultEdgeThreshold)).epsilon(1e-14));
}

TEST_CASE("doubling the rect divides objectness by four") {
  const Video v = square_video(1, 20, 8, 8);
  const double small = objectness_reward(v, 0, {6, 6, 7, 7});
  const double big = objectness_reward(v, 0, {3, 3, 14, 14});
  CHECK(small == 4.0 * big);
}

TEST_CASE("group cut by the rect contributes nothing") {
  const Video v = square_video(1, 20, 8, 8);
  CHECK(objectness_reward(v, 0, {0, 0, 9, 9}) == 0.0);
  CHECK(error_code([&] { objectness_reward(v, 0, {15, 15, 7, 7}); }) ==
        ErrorCode::kRectOutOfBounds);
}

TEST_CASE("edgebox sums objectness over selected frames") {
  const Video blank = Video::filled({3, 20, 20}, 0.0);
  const PatchGrid grid = make_patch_grid(20, 20, 7, 7, 3);
  CHECK(edgebox_reward(blank, grid, {{0, 1, 2}}, {{1, 1, 1}}) == 0.0);

  const Video v = square_video(3, 20, 8, 8);
  int inner = -1;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (grid.rects[p] == PatchRect{6, 6, 7, 7}) inner = static_cast<int>(p);
  }
  REQUIRE(inner >= 0);
  const double single = objectness_reward(v, 1, grid.rects[static_cast<std::size_t>(inner)]);
  CHECK(edgebox_reward(v, grid, {{0, inner, 0}}, {{0, 1, 0}}) == single);
  CHECK(edgebox_reward(v, grid, {{inner, inner, 0}}, {{1, 1, 0}}) == 2.0 * single);

  const ObjectnessTable table(v, grid);
  CHECK(edgebox_reward(table, {{inner, inner, 0}}, {{1, 1, 0}}) == 2.0 * single);
}

TEST_CASE("common value") {
  CHECK(common_value(0.3, 0.3) == 1.0);
  CHECK(common_value(0.0, 1.0) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(common_value(1.0, 0.0) == doctest::Approx(2.718282).epsilon(1e-6));
}

TEST_CASE("common reward is the relative change") {
  CHECK(common_reward(0.8, 0.8) == 0.0);
  CHECK(std::abs(common_reward(1.0, std::exp(-1.0)) - (std::exp(1.0) - 1.0)) <= 1e-12);
  CHECK(common_reward(0.5, 1.0) == -0.5);
  CHECK(error_code([] { common_reward(1.0, 0.0); }) == ErrorCode::kNonpositivePrevValue);
}

TEST_CASE("sparse reward") {
  CHECK(sparse_reward(frames_with(16, 10), 10) == 1.0);
  CHECK(std::abs(sparse_reward(frames_with(16, 16), 10) - std::exp(-0.375)) <= 1e-12);
  CHECK(std::abs(sparse_reward(frames_with(16, 4), 10) - std::exp(-0.375)) <= 1e-12);
  CHECK(error_code([] { sparse_reward(frames_with(16, 4), 16); }) == ErrorCode::kInvalidBound);
  CHECK(error_code([] { sparse_reward(frames_with(16, 4), 0); }) == ErrorCode::kInvalidBound);
}

TEST_CASE("representative reward") {
  const std::vector<std::vector<double>> feats = {{0.1, 0.4}, {0.9, -0.3}, {2.0, 1.0}};
  CHECK(representative_reward(feats, {{1, 1, 1}}) == 1.0);

  const std::vector<std::vector<double>> line = {{0.0}, {2.0}};
  CHECK(representative_reward(line, {{1, 0}}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

  const std::vector<std::vector<double>> same = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  CHECK(representative_reward(same, {{0, 0, 1}}) == 1.0);

  CHECK(error_code([&] { representative_reward(feats, {{0, 0, 0}}); }) ==
        ErrorCode::kEmptySelection);
}

TEST_CASE("reward totals with the default weights") {
  const RewardWeights w;
  RewardBundle b;
  b.edgebox = 1.0;
  CHECK(reward_totals(b, w).spatial == doctest::Approx(0.2).epsilon(1e-15));

  RewardBundle t;
  t.common = 0.5;
  t.sparse = 1.0;
  t.representative = 1.0;
  CHECK(reward_totals(t, w).temporal == doctest::Approx(1.5).epsilon(1e-15));

  const RewardTotals zero = reward_totals({}, w);
  CHECK(zero.spatial == 0.0);
  CHECK(zero.temporal == 0.0);
}

}  // TEST_SUITE
