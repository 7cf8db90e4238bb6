#include "astfocus/trainer.hpp"

#include <cmath>

#include "astfocus/error.hpp"

namespace astfocus {

using autodiff::Matrix;
using autodiff::NodeId;
using autodiff::Tape;

void PPOConfig::validate() const {
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "clip_ratio must lie in (0,1)");
  }
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate <= 0");
  if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs < 1");
  if (!(entropy_weight >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "entropy_weight < 0");
  if (!(critic_learning_rate >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "critic_learning_rate < 0");
  }
}

std::vector<double> CriticInput::flatten() const {
  std::vector<double> out;
  out.reserve(spatial_state.size() + temporal_state.size() + spatial_action.size() +
              temporal_action.size());
  for (const auto* part : {&spatial_state, &temporal_state, &spatial_action, &temporal_action}) {
    out.insert(out.end(), part->begin(), part->end());
  }
  return out;
}

std::vector<double> encode_spatial_action(const SpatialAction& action, int patches) {
  std::vector<double> enc(static_cast<std::size_t>(patches), 0.0);
  if (action.patches.empty()) return enc;
  const double w = 1.0 / static_cast<double>(action.patches.size());
  for (int p : action.patches) enc.at(static_cast<std::size_t>(p)) += w;
  return enc;
}

std::vector<double> encode_temporal_action(const TemporalAction& action) {
  const auto m = action.frames();
  const int selected = action.selected();
  if (m == 0 || selected == 0) return {0.0, 0.0};
  double pos = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (action.bits[i]) pos += m > 1 ? static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
  }
  return {static_cast<double>(selected) / static_cast<double>(m), pos / selected};
}

std::vector<double> expected_spatial_encoding(std::span<const std::vector<double>> dists) {
  if (dists.empty()) return {};
  std::vector<double> enc(dists[0].size(), 0.0);
  for (const auto& d : dists) {
    for (std::size_t j = 0; j < enc.size(); ++j) enc[j] += d[j];
  }
  for (double& v : enc) v /= static_cast<double>(dists.size());
  return enc;
}

std::vector<double> expected_temporal_encoding(std::span<const double> probs) {
  const auto m = probs.size();
  double total = 0.0, pos = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    total += probs[i];
    if (m > 1) pos += probs[i] * static_cast<double>(i) / static_cast<double>(m - 1);
  }
  if (m == 0 || total <= 0.0) return {0.0, 0.0};
  return {total / static_cast<double>(m), pos / total};
}

int critic_input_dim(const PolicyDims& d) {
  return (d.frame_features + d.patch_embed) + 2 * d.frame_features + d.patches + 2;
}

Critic::Critic(int input_dim, int hidden, ParamSet params)
    : input_dim_(input_dim), hidden_(hidden), params_(std::move(params)) {}

Critic Critic::init(int input_dim, int hidden, Rng& rng) {
  auto uniform = [&](int rows, int cols) {
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(cols), 1.0 / std::sqrt(cols));
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = u(rng);
    return m;
  };
  ParamSet p;
  p.add("critic.W1", uniform(hidden, input_dim));
  p.add("critic.b1", Matrix(hidden, 1));
  p.add("critic.W2", uniform(2, hidden));
  p.add("critic.b2", Matrix(2, 1));
  return Critic(input_dim, hidden, std::move(p));
}

Critic Critic::zeros(int input_dim, int hidden) {
  ParamSet p;
  p.add("critic.W1", Matrix(hidden, input_dim));
  p.add("critic.b1", Matrix(hidden, 1));
  p.add("critic.W2", Matrix(2, hidden));
  p.add("critic.b2", Matrix(2, 1));
  return Critic(input_dim, hidden, std::move(p));
}

QValues critic_forward(const Critic& critic, const CriticInput& input) {
  const auto x = input.flatten();
  if (static_cast<int>(x.size()) != critic.input_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "critic input has " + std::to_string(x.size()) +
                                               " values, expected " +
                                               std::to_string(critic.input_dim()));
  }
  const auto& p = critic.params();
  const Matrix& w1 = p.at("critic.W1");
  const Matrix& b1 = p.at("critic.b1");
  const Matrix& w2 = p.at("critic.W2");
  const Matrix& b2 = p.at("critic.b2");
  std::vector<double> h(static_cast<std::size_t>(critic.hidden()));
  for (int r = 0; r < critic.hidden(); ++r) {
    double s = b1[static_cast<std::size_t>(r)];
    for (int c = 0; c < critic.input_dim(); ++c) s += w1(r, c) * x[static_cast<std::size_t>(c)];
    h[static_cast<std::size_t>(r)] = std::tanh(s);
  }
  double q[2];
  for (int r = 0; r < 2; ++r) {
    double s = b2[static_cast<std::size_t>(r)];
    for (int c = 0; c < critic.hidden(); ++c) s += w2(r, c) * h[static_cast<std::size_t>(c)];
    q[r] = s;
  }
  return {q[0], q[1]};
}

NodeId build_critic_graph(Tape& t, const Critic& critic, const CriticInput& input) {
  const auto x = input.flatten();
  if (static_cast<int>(x.size()) != critic.input_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "critic input size");
  }
  const auto ids = register_params(t, critic.params());
  // Declaration order: W1, b1, W2, b2.
  const NodeId hidden =
      t.tanh(t.add(t.matmul(ids[0], t.constant(Matrix::column(x))), ids[1]));
  return t.add(t.matmul(ids[2], hidden), ids[3]);
}

Advantage compute_advantage(const Transition& t, const QValues& q) {
  return {t.spatial_reward - q.spatial, t.temporal_reward - q.temporal};
}

QValues baseline_values(const Transition& t, const Critic& critic) {
  if (t.expected_spatial_action.empty() && t.expected_temporal_action.empty()) {
    return critic_forward(critic, t.critic_input);
  }
  CriticInput spatial = t.critic_input;
  if (!t.expected_spatial_action.empty()) spatial.spatial_action = t.expected_spatial_action;
  CriticInput temporal = t.critic_input;
  if (!t.expected_temporal_action.empty()) temporal.temporal_action = t.expected_temporal_action;
  return {critic_forward(critic, spatial).spatial, critic_forward(critic, temporal).temporal};
}

Advantage compute_advantage(const Transition& t, const Critic& critic) {
  return compute_advantage(t, baseline_values(t, critic));
}

namespace {

// Gradient coefficient of the clipped surrogate min(rA, clip(r)A): A where
// the unclipped branch is active, 0 where the clip saturates.
double surrogate_coefficient(double ratio, double advantage, double clip) {
  if (advantage > 0.0 && ratio > 1.0 + clip) return 0.0;
  if (advantage < 0.0 && ratio < 1.0 - clip) return 0.0;
  return advantage;
}

// Objective node: mean_k ratio_k * coef_k + w * mean_k entropy_k.
NodeId surrogate_objective(Tape& t, std::span<const PolicyGraph> graphs,
                           std::span<const double> old_log_probs,
                           std::span<const double> coefs, double entropy_weight) {
  std::vector<NodeId> terms;
  std::vector<NodeId> entropies;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const NodeId ratio =
        t.exp(t.sub(graphs[k].log_prob, t.constant(Matrix::scalar(old_log_probs[k]))));
    terms.push_back(t.mul(ratio, t.constant(Matrix::scalar(coefs[k]))));
    entropies.push_back(graphs[k].entropy);
  }
  NodeId objective = t.mean(t.concat(terms));
  if (entropy_weight > 0.0) {
    objective = t.add(objective, t.mul(t.mean(t.concat(entropies)),
                                       t.constant(Matrix::scalar(entropy_weight))));
  }
  return objective;
}

void add_gradients(autodiff::Gradients& total, autodiff::Gradients grads) {
  for (auto& [name, m] : grads) {
    auto it = total.find(name);
    if (it == total.end()) {
      total.emplace(name, std::move(m));
      continue;
    }
    for (std::size_t j = 0; j < m.size(); ++j) it->second[j] += m[j];
  }
}

// Gradient of one transition's surrogate objective w.r.t. a policy.
template <typename Policy, typename BuildGraph>
autodiff::Gradients surrogate_gradient(const Policy& policy, BuildGraph&& build,
                                       double old_log_prob, double coef,
                                       double entropy_weight) {
  Tape t;
  const PolicyGraph graph[] = {build(t)};
  const NodeId obj = surrogate_objective(t, graph, std::span(&old_log_prob, 1),
                                         std::span(&coef, 1), entropy_weight);
  autodiff::Bindings b;
  policy.params().bind(b);
  autodiff::forward(t, b, obj);
  return autodiff::backward(t, obj);
}

}  // namespace

Agents ppo_update(const Agents& current, const PolicyContext& ctx,
                  std::span<const Transition> batch, const PPOConfig& cfg,
                  UpdateTargets targets) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyBatch, "ppo_update without transitions");
  cfg.validate();

  std::vector<Advantage> adv;
  adv.reserve(batch.size());
  for (const auto& tr : batch) adv.push_back(compute_advantage(tr, current.critic));

  Agents next = current;
  const double step = cfg.learning_rate / static_cast<double>(batch.size());
  const double critic_step = cfg.critic_rate() / static_cast<double>(batch.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (targets.spatial) {
      autodiff::Gradients total;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& tr = batch[i];
        const double now = spatial_forward(next.spatial, ctx, tr.spatial_action).log_prob;
        const double coef = surrogate_coefficient(std::exp(now - tr.spatial_log_prob),
                                                  adv[i].spatial, cfg.clip_ratio);
        add_gradients(total, surrogate_gradient(
                                 next.spatial,
                                 [&](Tape& t) {
                                   return build_spatial_graph(t, next.spatial, ctx,
                                                              tr.spatial_action);
                                 },
                                 tr.spatial_log_prob, coef, cfg.entropy_weight));
      }
      next.spatial.params().apply(total, step);
    }
    if (targets.temporal) {
      const auto probs = temporal_forward(next.temporal, ctx).probs;
      autodiff::Gradients total;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& tr = batch[i];
        const double now = temporal_log_prob(probs, tr.temporal_action);
        const double coef = surrogate_coefficient(std::exp(now - tr.temporal_log_prob),
                                                  adv[i].temporal, cfg.clip_ratio);
        add_gradients(total, surrogate_gradient(
                                 next.temporal,
                                 [&](Tape& t) {
                                   return build_temporal_graph(t, next.temporal, ctx,
                                                               tr.temporal_action);
                                 },
                                 tr.temporal_log_prob, coef, cfg.entropy_weight));
      }
      next.temporal.params().apply(total, step);
    }
    // Critic: descend mean_k (Q_s - r_s)^2 + (Q_t - r_t)^2.
    autodiff::Gradients total;
    for (const auto& tr : batch) {
      Tape t;
      const NodeId q = build_critic_graph(t, next.critic, tr.critic_input);
      const NodeId err = t.sub(
          q, t.constant(Matrix::column({tr.spatial_reward, tr.temporal_reward})));
      const NodeId loss = t.sum(t.mul(err, err));
      autodiff::Bindings b;
      next.critic.params().bind(b);
      autodiff::forward(t, b, loss);
      add_gradients(total, autodiff::backward(t, loss));
    }
    next.critic.params().apply(total, -critic_step);
  }
  return next;
}

}  // namespace astfocus
