#ifndef ASTFOCUS_ESTIMATOR_HPP_
#define ASTFOCUS_ESTIMATOR_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "astfocus/oracle.hpp"
#include "astfocus/policy.hpp"
#include "astfocus/tensor.hpp"

namespace astfocus {

struct EstimatorConfig {
  int samples = 60;      // n, even
  double delta = 1e-3;   // search variance
  bool record_noise = false;

  void validate() const;
};

struct GradientEstimate {
  std::vector<double> values;  // reduced space
  std::uint64_t queries_used = 0;
  // samples x dim, filled only when EstimatorConfig::record_noise is set.
  std::vector<std::vector<double>> noise;
};

// Score of a point in the reduced space.
using ReducedScore = std::function<double(std::span<const double> offset)>;

// Antithetic NES over an abstract reduced space: draws n/2 standard normal
// directions, mirrors them (sample n-1-k = -sample k) and returns
//   g = 1/(delta n) * sum_k noise_k * score(delta * noise_k).
// Scores are collected in index order and reduced pairwise, so a constant
// score yields exactly zero.
GradientEstimate estimate_gradient(const ReducedScore& score, std::size_t dim,
                                   const EstimatorConfig& cfg, Rng& rng);

class GradientEstimator {
 public:
  virtual ~GradientEstimator() = default;
  // Estimates the gradient of P(label | video) restricted to the mask.
  virtual GradientEstimate estimate(Oracle& oracle, const Video& video,
                                    const ReductionMask& mask, int label,
                                    const EstimatorConfig& cfg, Rng& rng) const = 0;
};

class NesEstimator : public GradientEstimator {
 public:
  GradientEstimate estimate(Oracle& oracle, const Video& video, const ReductionMask& mask,
                            int label, const EstimatorConfig& cfg,
                            Rng& rng) const override;
};

// Queries the oracle at clamp(video + delta * noise on the mask, 0, 1).
GradientEstimate nes_estimate(Oracle& oracle, const Video& video, const ReductionMask& mask,
                              int label, const EstimatorConfig& cfg, Rng& rng);

// NES against a LinearOracle whose first `dims` inputs are the reduced space,
// or against a constant oracle when `constant` is set. Each trial draws its
// noise from its own seed derived from `seed`.
struct FidelityReport {
  int dims = 0;
  int trials = 0;
  double cosine = 0.0;             // cosine(mean estimate, analytic gradient)
  double mean_trial_cosine = 0.0;  // mean over trials of the per-estimate cosine
  double gradient_norm = 0.0;      // norm of the mean estimate
  std::uint64_t queries = 0;
};
FidelityReport check_fidelity(int dims, const EstimatorConfig& cfg, int trials,
                              std::uint64_t seed, bool constant = false);

// Scatters a reduced-space estimate back to a video-shaped tensor, zero off
// the mask. Throws kLengthMismatch.
Volume embed_reduced(const GradientEstimate& estimate, const ReductionMask& mask);

}  // namespace astfocus

#endif  // ASTFOCUS_ESTIMATOR_HPP_
