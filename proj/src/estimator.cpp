#include "astfocus/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "astfocus/error.hpp"

namespace astfocus {

void EstimatorConfig::validate() const {
  if (samples < 2 || samples % 2 != 0) {
    throw Error(ErrorCode::kOddSampleCount,
                "NES needs an even sample count >= 2, got " + std::to_string(samples));
  }
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be > 0");
}

GradientEstimate estimate_gradient(const ReducedScore& score, std::size_t dim,
                                   const EstimatorConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.samples);
  const std::size_t half = n / 2;

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> base(half, std::vector<double>(dim));
  for (auto& d : base) {
    for (double& v : d) v = normal(rng);
  }

  std::vector<double> scores(n);
  std::vector<double> offset(dim);
  for (std::size_t k = 0; k < n; ++k) {
    const bool mirrored = k >= half;
    const auto& d = base[mirrored ? n - 1 - k : k];
    for (std::size_t j = 0; j < dim; ++j) {
      offset[j] = cfg.delta * (mirrored ? -d[j] : d[j]);
    }
    scores[k] = score(offset);
  }

  GradientEstimate est;
  est.values.assign(dim, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    const double diff = scores[k] - scores[n - 1 - k];
    if (diff == 0.0) continue;
    for (std::size_t j = 0; j < dim; ++j) est.values[j] += base[k][j] * diff;
  }
  const double norm = 1.0 / (cfg.delta * static_cast<double>(n));
  for (double& v : est.values) v *= norm;
  est.queries_used = n;

  if (cfg.record_noise) {
    est.noise.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const bool mirrored = k >= half;
      const auto& d = base[mirrored ? n - 1 - k : k];
      est.noise[k].resize(dim);
      for (std::size_t j = 0; j < dim; ++j) est.noise[k][j] = mirrored ? -d[j] : d[j];
    }
  }
  return est;
}

GradientEstimate nes_estimate(Oracle& oracle, const Video& video, const ReductionMask& mask,
                              int label, const EstimatorConfig& cfg, Rng& rng) {
  cfg.validate();
  if (mask.shape() != video.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "mask built for another video shape");
  }
  const auto indices = mask.value_indices();
  if (indices.empty()) throw Error(ErrorCode::kZeroFramesSelected, "empty mask");

  const int labels[] = {label};
  std::vector<double> point(video.data().begin(), video.data().end());
  auto score = [&](std::span<const double> offset) {
    for (std::size_t j = 0; j < indices.size(); ++j) {
      point[indices[j]] = std::clamp(video[indices[j]] + offset[j], 0.0, 1.0);
    }
    const auto result = oracle.query(Video(video.shape(), point), labels);
    const auto s = result.score_of(label);
    if (!s) throw Error(ErrorCode::kOracleFailure, "oracle omitted requested label");
    return *s;
  };
  return estimate_gradient(score, indices.size(), cfg, rng);
}

GradientEstimate NesEstimator::estimate(Oracle& oracle, const Video& video,
                                        const ReductionMask& mask, int label,
                                        const EstimatorConfig& cfg, Rng& rng) const {
  return nes_estimate(oracle, video, mask, label, cfg, rng);
}

FidelityReport check_fidelity(int dims, const EstimatorConfig& cfg, int trials,
                              std::uint64_t seed, bool constant) {
  cfg.validate();
  if (dims < 1 || trials < 1) throw Error(ErrorCode::kInvalidArgument, "dims and trials must be >= 1");
  const VideoShape shape{1, 1, (dims + kChannels - 1) / kChannels};
  const Video reference = Video::filled(shape, 0.5);

  Rng wrng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Volume weights(shape);
  for (int j = 0; j < dims; ++j) weights[static_cast<std::size_t>(j)] = normal(wrng) / std::sqrt(dims);

  std::unique_ptr<ScoreOracle> oracle;
  if (constant) {
    oracle = std::make_unique<ConstantOracle>(shape, std::vector<double>{0.7, 0.3});
  } else {
    oracle = std::make_unique<LinearOracle>(weights, reference);
  }

  const int labels[] = {0};
  std::vector<double> point(reference.data().begin(), reference.data().end());
  auto score = [&](std::span<const double> offset) {
    for (int j = 0; j < dims; ++j) point[static_cast<std::size_t>(j)] = 0.5 + offset[static_cast<std::size_t>(j)];
    return *oracle->query(Video(shape, point), labels).score_of(0);
  };

  auto cosine = [](std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      ab += a[j] * b[j];
      aa += a[j] * a[j];
      bb += b[j] * b[j];
    }
    return aa > 0.0 && bb > 0.0 ? ab / std::sqrt(aa * bb) : 0.0;
  };

  const std::span<const double> truth = weights.data().first(static_cast<std::size_t>(dims));
  std::vector<double> mean(static_cast<std::size_t>(dims), 0.0);
  FidelityReport rep;
  rep.dims = dims;
  rep.trials = trials;
  for (int k = 0; k < trials; ++k) {
    Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(k + 1)));
    const auto est = estimate_gradient(score, static_cast<std::size_t>(dims), cfg, rng);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += est.values[j] / trials;
    rep.mean_trial_cosine += cosine(est.values, truth) / trials;
  }
  rep.cosine = cosine(mean, truth);
  double n2 = 0.0;
  for (double v : mean) n2 += v * v;
  rep.gradient_norm = std::sqrt(n2);
  rep.queries = oracle->queries();
  return rep;
}

Volume embed_reduced(const GradientEstimate& estimate, const ReductionMask& mask) {
  const auto indices = mask.value_indices();
  if (indices.size() != estimate.values.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "estimate has " + std::to_string(estimate.values.size()) +
                    " values, mask covers " + std::to_string(indices.size()));
  }
  Volume out(mask.shape());
  for (std::size_t j = 0; j < indices.size(); ++j) out[indices[j]] = estimate.values[j];
  return out;
}

}  // namespace astfocus
