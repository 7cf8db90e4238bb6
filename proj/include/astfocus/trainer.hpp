#ifndef ASTFOCUS_TRAINER_HPP_
#define ASTFOCUS_TRAINER_HPP_

#include <span>
#include <vector>

#include "astfocus/policy.hpp"

namespace astfocus {

struct PPOConfig {
  double clip_ratio = 0.2;
  double learning_rate = 1e-3;
  int epochs = 4;
  double entropy_weight = 0.01;
  double critic_learning_rate = 0.0;  // 0: learning_rate

  double critic_rate() const { return critic_learning_rate > 0.0 ? critic_learning_rate : learning_rate; }
  void validate() const;
};

// Fixed-size critic input: state summaries of both agents plus encodings of
// both actions.
struct CriticInput {
  std::vector<double> spatial_state;
  std::vector<double> temporal_state;
  std::vector<double> spatial_action;
  std::vector<double> temporal_action;

  std::vector<double> flatten() const;
};

// Mean one-hot patch vector over frames (length D).
std::vector<double> encode_spatial_action(const SpatialAction& action, int patches);
// (selection rate, mean normalised position of the selected frames).
std::vector<double> encode_temporal_action(const TemporalAction& action);

// Expected encodings under the policy that produced an action: the mean of
// the per-frame patch distributions, and (mean p_i, p-weighted position).
std::vector<double> expected_spatial_encoding(std::span<const std::vector<double>> dists);
std::vector<double> expected_temporal_encoding(std::span<const double> probs);

struct Transition {
  CriticInput critic_input;
  SpatialAction spatial_action;
  TemporalAction temporal_action;
  double spatial_log_prob = 0.0;
  double temporal_log_prob = 0.0;
  double spatial_reward = 0.0;
  double temporal_reward = 0.0;
  int iteration = 0;
  // Expected encodings of each agent's own action. When set, agent k's
  // baseline is Q_k with its own action replaced by this expectation and the
  // partner's action kept; empty means Q_k(s, a).
  std::vector<double> expected_spatial_action;
  std::vector<double> expected_temporal_action;
};

// One tanh hidden layer shared by two scalar heads (Q_spatial, Q_temporal).
class Critic {
 public:
  Critic() = default;
  Critic(int input_dim, int hidden, ParamSet params);
  static Critic init(int input_dim, int hidden, Rng& rng);
  static Critic zeros(int input_dim, int hidden);

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

 private:
  int input_dim_ = 0;
  int hidden_ = 0;
  ParamSet params_;
};

int critic_input_dim(const PolicyDims& dims);

struct QValues {
  double spatial = 0.0;
  double temporal = 0.0;
};
QValues critic_forward(const Critic& critic, const CriticInput& input);

// Builds Q on a tape; returns the 2x1 node (spatial, temporal).
autodiff::NodeId build_critic_graph(autodiff::Tape& tape, const Critic& critic,
                                    const CriticInput& input);

struct Advantage {
  double spatial = 0.0;
  double temporal = 0.0;
};
// One-step episodes: A_k = r_k - Q_k.
Advantage compute_advantage(const Transition& t, const QValues& q);
// Q_k evaluated on the baseline inputs described in Transition.
QValues baseline_values(const Transition& t, const Critic& critic);
Advantage compute_advantage(const Transition& t, const Critic& critic);

struct Agents {
  SpatialPolicy spatial;
  TemporalPolicy temporal;
  Critic critic;
};

// Which policies an update may change (the critic is always trained).
struct UpdateTargets {
  bool spatial = true;
  bool temporal = true;
};

// Clipped-surrogate ascent for each agent with advantages from the critic as
// it was before the update, plus critic regression onto the rewards. Plain
// gradient steps of size learning_rate, `epochs` passes over the batch.
// Throws kEmptyBatch.
Agents ppo_update(const Agents& current, const PolicyContext& ctx,
                  std::span<const Transition> batch, const PPOConfig& cfg,
                  UpdateTargets targets = {});

}  // namespace astfocus

#endif  // ASTFOCUS_TRAINER_HPP_
