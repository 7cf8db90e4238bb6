#ifndef ASTFOCUS_POLICY_HPP_
#define ASTFOCUS_POLICY_HPP_

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "astfocus/autodiff.hpp"
#include "astfocus/features.hpp"
#include "astfocus/tensor.hpp"

namespace astfocus {

using Rng = std::mt19937_64;

// Patch probabilities are floored at kProbFloor and frame probabilities
// clamped to [kProbFloor, 1 - kProbFloor] before any log.
inline constexpr double kProbFloor = 1e-12;

// Named parameter tensors in declaration order.
class ParamSet {
 public:
  void add(std::string name, autodiff::Matrix value);

  const autodiff::Matrix& at(std::string_view name) const;
  autodiff::Matrix& at(std::string_view name);
  bool contains(std::string_view name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t value_count() const;

  void bind(autodiff::Bindings& bindings) const;
  // p += scale * g for every parameter with a gradient entry.
  void apply(const autodiff::Gradients& grads, double scale);
  bool all_finite() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<std::string> names_;
  std::vector<autodiff::Matrix> values_;
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;

  static LstmState zeros(int hidden) {
    return {std::vector<double>(static_cast<std::size_t>(hidden), 0.0),
            std::vector<double>(static_cast<std::size_t>(hidden), 0.0)};
  }
};

// Gate weights are hidden x (input + hidden) acting on concat(input, h).
struct LstmParams {
  autodiff::Matrix w_i, w_f, w_o, w_g;
  autodiff::Matrix b_i, b_f, b_o, b_g;

  int input_dim() const { return w_i.cols() - w_i.rows(); }
  int hidden_dim() const { return w_i.rows(); }

  static LstmParams from(const ParamSet& params, std::string_view prefix);
};

LstmState lstm_step(const LstmParams& params, std::span<const double> input,
                    const LstmState& state);

struct PolicyDims {
  int frame_features = 5 * 16;  // 5 * G^2 with G = 4
  int patch_features = kRegionStats;
  int hidden = 64;
  int patch_embed = 16;
  int patches = 16;  // grid size D
};

// Per-attack constants the policies read: frame features of the clean video
// and the pooled statistics of every grid patch in every frame.
struct PolicyContext {
  std::vector<std::vector<double>> frame_features;                 // M x F
  std::vector<std::vector<std::vector<double>>> patch_features;    // M x D x 5

  int frames() const { return static_cast<int>(frame_features.size()); }
  int patches() const {
    return patch_features.empty() ? 0 : static_cast<int>(patch_features[0].size());
  }

  static PolicyContext build(const Video& video, const PatchGrid& grid,
                             int cells_per_side);
};

class SpatialPolicy {
 public:
  SpatialPolicy() = default;
  SpatialPolicy(PolicyDims dims, ParamSet params);
  static SpatialPolicy init(const PolicyDims& dims, Rng& rng);
  static SpatialPolicy zeros(const PolicyDims& dims);

  const PolicyDims& dims() const { return dims_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

 private:
  PolicyDims dims_;
  ParamSet params_;
};

class TemporalPolicy {
 public:
  TemporalPolicy() = default;
  TemporalPolicy(PolicyDims dims, ParamSet params);
  static TemporalPolicy init(const PolicyDims& dims, Rng& rng);
  static TemporalPolicy zeros(const PolicyDims& dims);

  const PolicyDims& dims() const { return dims_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

 private:
  PolicyDims dims_;
  ParamSet params_;
};

struct SpatialRollout {
  std::vector<std::vector<double>> dists;  // M x D
  SpatialAction action;
  double log_prob = 0.0;
  // Mean over frames of concat(e_i, patch embedding of frame i-1).
  std::vector<double> state_summary;
};

struct TemporalRollout {
  std::vector<double> probs;  // M
  TemporalAction action;
  double log_prob = 0.0;
  bool fallback = false;
  // concat(mean_i e_i, e_g).
  std::vector<double> state_summary;
};

// Draws one patch per frame, feeding each draw's patch statistics into the
// next frame's input. Frame 0 sees a zero patch embedding.
SpatialRollout spatial_forward(const SpatialPolicy& policy, const PolicyContext& ctx,
                               Rng& rng);
// Same recurrence with the patch choices fixed.
SpatialRollout spatial_forward(const SpatialPolicy& policy, const PolicyContext& ctx,
                               const SpatialAction& action);

TemporalRollout temporal_forward(const TemporalPolicy& policy, const PolicyContext& ctx);

int sample_categorical(std::span<const double> dist, Rng& rng);
struct SpatialSample {
  SpatialAction action;
  double log_prob = 0.0;
};
SpatialSample sample_spatial(std::span<const std::vector<double>> dists, Rng& rng);
double spatial_log_prob(std::span<const std::vector<double>> dists,
                        const SpatialAction& action);

struct TemporalSample {
  TemporalAction action;
  double log_prob = 0.0;
  bool fallback = false;
};
// Independent Bernoulli draws; an all-zero draw selects argmax p instead.
TemporalSample sample_temporal(std::span<const double> probs, Rng& rng);
double temporal_log_prob(std::span<const double> probs, const TemporalAction& action);

// Differentiable log-probability and entropy of a fixed joint action, built on
// a tape whose parameter nodes carry the policy's parameter names.
struct PolicyGraph {
  autodiff::NodeId log_prob;
  autodiff::NodeId entropy;
};
PolicyGraph build_spatial_graph(autodiff::Tape& tape, const SpatialPolicy& policy,
                                const PolicyContext& ctx, const SpatialAction& action);
PolicyGraph build_temporal_graph(autodiff::Tape& tape, const TemporalPolicy& policy,
                                 const PolicyContext& ctx, const TemporalAction& action);
// Registers every parameter of `params` on the tape.
std::vector<autodiff::NodeId> register_params(autodiff::Tape& tape, const ParamSet& params);

// Checkpoint: one JSON manifest line (kind, dims, seed, version, tensor
// names and shapes) followed by little-endian f64 arrays in declared order.
struct CheckpointInfo {
  std::string kind;
  PolicyDims dims;
  std::uint64_t seed = 0;
  int version = 0;
};
void save_checkpoint(std::ostream& out, const CheckpointInfo& info, const ParamSet& params);
ParamSet load_checkpoint(std::istream& in, CheckpointInfo* info = nullptr);

}  // namespace astfocus

#endif  // ASTFOCUS_POLICY_HPP_
