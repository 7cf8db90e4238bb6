#include "astfocus/attack.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <ostream>
#include <thread>

#include "astfocus/error.hpp"

namespace astfocus {

std::string_view to_string(AttackMode mode) {
  return mode == AttackMode::kTargeted ? "targeted" : "untargeted";
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kFull: return "full";
    case Variant::kDense: return "dense";
    case Variant::kSpatialOnly: return "spatial_only";
    case Variant::kTemporalOnly: return "temporal_only";
    case Variant::kRandomAgents: return "random_agents";
  }
  return "unknown";
}

std::optional<AttackMode> parse_mode(std::string_view text) {
  if (text == "untargeted") return AttackMode::kUntargeted;
  if (text == "targeted") return AttackMode::kTargeted;
  return std::nullopt;
}

std::optional<Variant> parse_variant(std::string_view text) {
  for (Variant v : {Variant::kFull, Variant::kDense, Variant::kSpatialOnly,
                    Variant::kTemporalOnly, Variant::kRandomAgents}) {
    if (text == to_string(v)) return v;
  }
  return std::nullopt;
}

std::uint64_t AttackConfig::budget() const {
  if (max_queries > 0) return max_queries;
  return mode == AttackMode::kTargeted ? kTargetedBudget : kUntargetedBudget;
}

double AttackConfig::nes_delta() const {
  if (delta > 0.0) return delta;
  return mode == AttackMode::kTargeted ? 1e-6 : 1e-3;
}

EstimatorConfig AttackConfig::estimator() const {
  EstimatorConfig e;
  e.samples = samples;
  e.delta = nes_delta();
  return e;
}

void AttackConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, what); };
  if (!(alpha > 0.0)) fail("alpha must be > 0");
  if (!(eps_bound > 0.0)) fail("eps_bound must be > 0");
  if (max_iters < 1) fail("max_iters must be >= 1");
  if (samples < 2 || samples % 2 != 0) fail("samples must be even and >= 2");
  if (delta < 0.0) fail("delta must be >= 0");
  if (patch_height < 1 || patch_width < 1) fail("patch dims must be >= 1");
  if (stride < 0) fail("stride must be >= 0");
  if (feature_cells < 1) fail("feature_cells must be >= 1");
  if (frame_bound < 1) fail("frame_bound must be >= 1");
  if (hidden < 1 || patch_embed < 1 || critic_hidden < 1) fail("network dims must be >= 1");
  if (weights.lambda1 < 0.0 || weights.lambda2 < 0.0 || weights.lambda3 < 0.0) {
    fail("reward weights must be >= 0");
  }
  if (mode == AttackMode::kTargeted && target_label < 0) fail("targeted mode needs target_label");
  try {
    ppo.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

namespace {

using Clock = std::chrono::steady_clock;

bool is_success(const QueryResult& r, int true_label, const AttackConfig& cfg) {
  if (cfg.mode == AttackMode::kTargeted) return r.top1.label == cfg.target_label;
  return r.top1.label != true_label;
}

// V = exp(P(y') - P(y)): y' is the runner-up (untargeted) or the target.
double value_of(const QueryResult& r, int true_label, const AttackConfig& cfg) {
  const auto p_true = r.score_of(true_label);
  if (!p_true) throw Error(ErrorCode::kOracleFailure, "oracle omitted the true label");
  double p_other = 0.0;
  if (cfg.mode == AttackMode::kTargeted) {
    const auto p = r.score_of(cfg.target_label);
    if (!p) throw Error(ErrorCode::kOracleFailure, "oracle omitted the target label");
    p_other = *p;
  } else {
    p_other = r.top1.label != true_label ? r.top1.score : r.top2.score;
  }
  return common_value(p_other, *p_true);
}

bool uses_spatial_agent(Variant v) {
  return v == Variant::kFull || v == Variant::kSpatialOnly || v == Variant::kRandomAgents;
}
bool uses_temporal_agent(Variant v) {
  return v == Variant::kFull || v == Variant::kTemporalOnly || v == Variant::kRandomAgents;
}
bool trains(Variant v) {
  return v == Variant::kFull || v == Variant::kSpatialOnly || v == Variant::kTemporalOnly;
}

// Welford running mean and variance. push() returns the sample centred on
// the running mean, divided by the running deviation once two samples differ.
class RunningScale {
 public:
  double push(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
    const double var = n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
    const double c = x - mean_;
    return var > 0.0 ? c / std::sqrt(var) : c;
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct Step {
  ReductionMask mask;
  SpatialAction spatial;
  TemporalAction temporal;
  double spatial_log_prob = 0.0;
  double temporal_log_prob = 0.0;
  std::vector<double> spatial_state;
  std::vector<double> temporal_state;
  std::vector<double> spatial_expected;
  std::vector<double> temporal_expected;
};

}  // namespace

AttackResult run_attack(const Video& video, int true_label, Oracle& oracle,
                        const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto start = Clock::now();
  const VideoShape shape = video.shape();
  const Variant variant = cfg.variant;
  const int m = shape.frames;

  if (uses_temporal_agent(variant) && !(cfg.frame_bound < m)) {
    throw Error(ErrorCode::kInvalidBound, "frame_bound must be < frames (" +
                                              std::to_string(m) + ")");
  }

  BudgetedOracle budget(oracle, cfg.budget());
  std::vector<int> requested = {true_label};
  if (cfg.mode == AttackMode::kTargeted) requested.push_back(cfg.target_label);
  const int nes_label = cfg.mode == AttackMode::kTargeted ? cfg.target_label : true_label;
  // Descend P(y) untargeted, ascend P(target) targeted.
  const double direction = cfg.mode == AttackMode::kTargeted ? 1.0 : -1.0;

  AttackResult result;
  result.support.assign(static_cast<std::size_t>(m) * shape.pixels_per_frame(), 0);
  Video adv = video;

  auto finish = [&](bool success, int label) {
    result.success = success;
    result.final_label = label;
    result.queries_used = budget.queries();
    result.map = map_metric(adv - video);
    result.adversarial = adv;
    result.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return result;
  };

  QueryResult last = budget.query(adv, requested);
  if (is_success(last, true_label, cfg)) return finish(true, last.top1.label);
  double v_prev = value_of(last, true_label, cfg);

  // Agents and per-video constants.
  PatchGrid grid;
  PolicyContext ctx;
  ObjectnessTable objectness;
  Agents agents;
  PolicyDims dims;
  if (variant != Variant::kDense) {
    const int stride_h = cfg.stride > 0 ? cfg.stride : default_stride(shape.height, cfg.patch_height);
    const int stride_w = cfg.stride > 0 ? cfg.stride : default_stride(shape.width, cfg.patch_width);
    if (uses_spatial_agent(variant)) {
      grid = make_patch_grid(shape.height, shape.width, cfg.patch_height, cfg.patch_width,
                             std::min(stride_h, stride_w));
      objectness = ObjectnessTable(video, grid, cfg.edge_threshold);
    } else {
      grid = make_patch_grid(shape.height, shape.width, shape.height, shape.width, 1);
    }
    ctx = PolicyContext::build(video, grid, cfg.feature_cells);
    dims.frame_features = kRegionStats * cfg.feature_cells * cfg.feature_cells;
    dims.hidden = cfg.hidden;
    dims.patch_embed = cfg.patch_embed;
    dims.patches = static_cast<int>(grid.size());
    if (trains(variant)) {
      agents.spatial = SpatialPolicy::init(dims, rng);
      agents.temporal = TemporalPolicy::init(dims, rng);
      agents.critic = Critic::init(critic_input_dim(dims), cfg.critic_hidden, rng);
    }
  }
  const UpdateTargets targets{uses_spatial_agent(variant), uses_temporal_agent(variant)};
  const EstimatorConfig est_cfg = cfg.estimator();
  RunningScale spatial_scale;
  RunningScale temporal_scale;
  const TemporalAction all_frames{std::vector<std::uint8_t>(static_cast<std::size_t>(m), 1)};

  auto act = [&]() {
    Step s;
    switch (variant) {
      case Variant::kDense:
        s.mask = ReductionMask::full(shape);
        s.temporal = all_frames;
        return s;
      case Variant::kRandomAgents: {
        std::uniform_int_distribution<int> patch(0, static_cast<int>(grid.size()) - 1);
        s.spatial.patches.resize(static_cast<std::size_t>(m));
        for (int& p : s.spatial.patches) p = patch(rng);
        const std::vector<double> half(static_cast<std::size_t>(m), 0.5);
        s.temporal = sample_temporal(half, rng).action;
        break;
      }
      default: {
        if (targets.spatial) {
          auto roll = spatial_forward(agents.spatial, ctx, rng);
          s.spatial = std::move(roll.action);
          s.spatial_log_prob = roll.log_prob;
          s.spatial_state = std::move(roll.state_summary);
          s.spatial_expected = expected_spatial_encoding(roll.dists);
        } else {
          s.spatial.patches.assign(static_cast<std::size_t>(m), 0);
          s.spatial_state.assign(static_cast<std::size_t>(dims.frame_features + dims.patch_embed), 0.0);
        }
        if (targets.temporal) {
          auto roll = temporal_forward(agents.temporal, ctx);
          auto draw = sample_temporal(roll.probs, rng);
          s.temporal = std::move(draw.action);
          s.temporal_log_prob = draw.log_prob;
          s.temporal_state = std::move(roll.state_summary);
          s.temporal_expected = expected_temporal_encoding(roll.probs);
        } else {
          s.temporal = all_frames;
          s.temporal_state.assign(static_cast<std::size_t>(2 * dims.frame_features), 0.0);
        }
      }
    }
    s.mask = build_mask(s.temporal, s.spatial, grid, shape);
    return s;
  };

  try {
    for (int t = 1; t <= cfg.max_iters; ++t) {
      Step step = act();
      const auto bits = step.mask.bits();
      for (std::size_t i = 0; i < bits.size(); ++i) result.support[i] |= bits[i];

      const auto g = nes_estimate(budget, adv, step.mask, nes_label, est_cfg, rng);
      const auto indices = step.mask.value_indices();
      Volume candidate = adv.values();
      for (std::size_t j = 0; j < indices.size(); ++j) {
        const double gj = g.values[j];
        const double sign = gj > 0.0 ? 1.0 : (gj < 0.0 ? -1.0 : 0.0);
        candidate[indices[j]] += direction * cfg.alpha * sign;
      }
      adv = project(candidate, video, cfg.eps_bound);
      result.iterations = t;

      last = budget.query(adv, requested);
      if (is_success(last, true_label, cfg)) return finish(true, last.top1.label);

      IterationLog log;
      log.t = t;
      log.queries = budget.queries();
      log.frames = step.temporal.bits;
      log.patches.assign(static_cast<std::size_t>(m), -1);
      if (uses_spatial_agent(variant)) log.patches = step.spatial.patches;

      RewardBundle& r = log.rewards;
      r.value_prev = v_prev;
      r.value_curr = value_of(last, true_label, cfg);
      r.common = common_reward(r.value_curr, r.value_prev);
      if (uses_spatial_agent(variant)) r.edgebox = edgebox_reward(objectness, step.spatial, step.temporal);
      if (uses_temporal_agent(variant)) {
        r.sparse = sparse_reward(step.temporal, cfg.frame_bound);
        r.representative = representative_reward(ctx.frame_features, step.temporal);
      }
      const auto totals = reward_totals(r, cfg.weights);
      r.spatial_total = totals.spatial;
      r.temporal_total = totals.temporal;
      log.value = r.value_curr;
      v_prev = r.value_curr;

      if (trains(variant)) {
        Transition tr;
        tr.critic_input.spatial_state = std::move(step.spatial_state);
        tr.critic_input.temporal_state = std::move(step.temporal_state);
        tr.critic_input.spatial_action = targets.spatial
                                             ? encode_spatial_action(step.spatial, dims.patches)
                                             : std::vector<double>(static_cast<std::size_t>(dims.patches), 0.0);
        tr.critic_input.temporal_action = encode_temporal_action(step.temporal);
        tr.spatial_action = step.spatial;
        tr.temporal_action = step.temporal;
        tr.spatial_log_prob = step.spatial_log_prob;
        tr.temporal_log_prob = step.temporal_log_prob;
        tr.spatial_reward = r.spatial_total;
        tr.temporal_reward = r.temporal_total;
        if (cfg.reward_scaling) {
          tr.spatial_reward = spatial_scale.push(r.spatial_total);
          tr.temporal_reward = temporal_scale.push(r.temporal_total);
        }
        tr.iteration = t;
        tr.expected_spatial_action = std::move(step.spatial_expected);
        tr.expected_temporal_action = std::move(step.temporal_expected);
        agents = ppo_update(agents, ctx, std::span(&tr, 1), cfg.ppo, targets);
      }
      result.logs.push_back(std::move(log));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kBudgetExhausted) throw;
  }
  return finish(false, last.top1.label);
}

AttackResult run_variant(Variant variant, const Video& video, int true_label, Oracle& oracle,
                         AttackConfig cfg, Rng& rng) {
  cfg.variant = variant;
  return run_attack(video, true_label, oracle, cfg, rng);
}

bool support_contained(const AttackResult& result, const Video& original) {
  const VideoShape& s = original.shape();
  if (result.adversarial.shape() != s) return false;
  for (int f = 0; f < s.frames; ++f) {
    for (int r = 0; r < s.height; ++r) {
      for (int c = 0; c < s.width; ++c) {
        const std::size_t px = (static_cast<std::size_t>(f) * s.height + r) * s.width + c;
        if (result.support[px]) continue;
        for (int ch = 0; ch < kChannels; ++ch) {
          if (result.adversarial.at(f, r, c, ch) != original.at(f, r, c, ch)) return false;
        }
      }
    }
  }
  return true;
}

BenchReport summarize(Variant variant, std::vector<BenchRow> rows, std::uint64_t budget) {
  BenchReport rep;
  rep.variant = variant;
  rep.rows = std::move(rows);
  if (rep.rows.empty()) return rep;
  double wins = 0.0, queries = 0.0, map = 0.0, secs = 0.0;
  for (const auto& r : rep.rows) {
    wins += r.success ? 1.0 : 0.0;
    queries += static_cast<double>(r.success ? r.queries_used : budget);
    map += r.map;
    secs += r.wall_seconds;
  }
  const double n = static_cast<double>(rep.rows.size());
  rep.fooling_rate = 100.0 * wins / n;
  rep.mean_queries = queries / n;
  rep.mean_map = map / n;
  rep.mean_seconds = secs / n;
  return rep;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

BenchReport run_bench(std::span<const BenchItem> items, Oracle& oracle, const AttackConfig& cfg,
                      int jobs) {
  if (items.empty()) throw Error(ErrorCode::kInvalidArgument, "bench needs at least one video");
  cfg.validate();
  std::vector<BenchRow> rows(items.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      try {
        Rng rng(derive_seed(cfg.seed, i));
        const auto res = run_attack(items[i].video, items[i].label, oracle, cfg, rng);
        rows[i] = {static_cast<int>(i), items[i].label, res.success, res.queries_used,
                   res.map, res.wall_seconds, res.final_label, res.iterations};
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = items.size();
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(items.size()));
  std::vector<std::jthread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return summarize(cfg.variant, std::move(rows), cfg.budget());
}

// ---------------------------------------------------------------------------
// serialization

nlohmann::json config_json(const AttackConfig& c) {
  return {
      {"mode", to_string(c.mode)},
      {"target_label", c.target_label},
      {"variant", to_string(c.variant)},
      {"alpha", c.alpha},
      {"eps_bound", c.eps_bound},
      {"max_iters", c.max_iters},
      {"max_queries", c.budget()},
      {"samples", c.samples},
      {"delta", c.nes_delta()},
      {"patch_height", c.patch_height},
      {"patch_width", c.patch_width},
      {"stride", c.stride},
      {"feature_cells", c.feature_cells},
      {"frame_bound", c.frame_bound},
      {"edge_threshold", c.edge_threshold},
      {"lambda1", c.weights.lambda1},
      {"lambda2", c.weights.lambda2},
      {"lambda3", c.weights.lambda3},
      {"hidden", c.hidden},
      {"patch_embed", c.patch_embed},
      {"critic_hidden", c.critic_hidden},
      {"clip_ratio", c.ppo.clip_ratio},
      {"learning_rate", c.ppo.learning_rate},
      {"epochs", c.ppo.epochs},
      {"entropy_weight", c.ppo.entropy_weight},
      {"critic_learning_rate", c.ppo.critic_rate()},
      {"reward_scaling", c.reward_scaling},
      {"seed", c.seed},
  };
}

namespace {

template <typename T>
T typed(const nlohmann::json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw Error(ErrorCode::kConfigError, "key '" + key + "' must be a number");
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!v.is_number_unsigned()) {
      throw Error(ErrorCode::kConfigError, "key '" + key + "' must be a non-negative integer");
    }
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw Error(ErrorCode::kConfigError, "key '" + key + "' must be an integer");
  } else {
    if (!v.is_string()) throw Error(ErrorCode::kConfigError, "key '" + key + "' must be a string");
  }
  return v.get<T>();
}

}  // namespace

AttackConfig config_from_json(const nlohmann::json& j, AttackConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "attack config must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "mode") {
      const auto m = parse_mode(typed<std::string>(v, key));
      if (!m) throw Error(ErrorCode::kConfigError, "mode must be untargeted or targeted");
      c.mode = *m;
    } else if (key == "variant") {
      const auto var = parse_variant(typed<std::string>(v, key));
      if (!var) throw Error(ErrorCode::kConfigError, "unknown variant '" + v.get<std::string>() + "'");
      c.variant = *var;
    } else if (key == "target_label") c.target_label = typed<int>(v, key);
    else if (key == "alpha") c.alpha = typed<double>(v, key);
    else if (key == "eps_bound") c.eps_bound = typed<double>(v, key);
    else if (key == "max_iters") c.max_iters = typed<int>(v, key);
    else if (key == "max_queries") c.max_queries = typed<std::uint64_t>(v, key);
    else if (key == "samples") c.samples = typed<int>(v, key);
    else if (key == "delta") c.delta = typed<double>(v, key);
    else if (key == "patch_height") c.patch_height = typed<int>(v, key);
    else if (key == "patch_width") c.patch_width = typed<int>(v, key);
    else if (key == "stride") c.stride = typed<int>(v, key);
    else if (key == "feature_cells") c.feature_cells = typed<int>(v, key);
    else if (key == "frame_bound") c.frame_bound = typed<int>(v, key);
    else if (key == "edge_threshold") c.edge_threshold = typed<double>(v, key);
    else if (key == "lambda1") c.weights.lambda1 = typed<double>(v, key);
    else if (key == "lambda2") c.weights.lambda2 = typed<double>(v, key);
    else if (key == "lambda3") c.weights.lambda3 = typed<double>(v, key);
    else if (key == "hidden") c.hidden = typed<int>(v, key);
    else if (key == "patch_embed") c.patch_embed = typed<int>(v, key);
    else if (key == "critic_hidden") c.critic_hidden = typed<int>(v, key);
    else if (key == "clip_ratio") c.ppo.clip_ratio = typed<double>(v, key);
    else if (key == "learning_rate") c.ppo.learning_rate = typed<double>(v, key);
    else if (key == "epochs") c.ppo.epochs = typed<int>(v, key);
    else if (key == "entropy_weight") c.ppo.entropy_weight = typed<double>(v, key);
    else if (key == "critic_learning_rate") c.ppo.critic_learning_rate = typed<double>(v, key);
    else if (key == "reward_scaling") {
      if (!v.is_boolean()) throw Error(ErrorCode::kConfigError, "key 'reward_scaling' must be a boolean");
      c.reward_scaling = v.get<bool>();
    } else if (key == "seed") c.seed = typed<std::uint64_t>(v, key);
    else throw Error(ErrorCode::kConfigError, "unknown key '" + key + "'");
  }
  return c;
}

nlohmann::json result_json(const AttackResult& r, bool timing) {
  nlohmann::json j = {
      {"success", r.success},
      {"queries_used", r.queries_used},
      {"map", r.map},
      {"final_label", r.final_label},
      {"iterations", r.iterations},
  };
  if (timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

nlohmann::json report_json(std::span<const BenchReport> reports, bool timing) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& rep : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : rep.rows) {
      nlohmann::json jr = {{"index", row.index},     {"label", row.label},
                           {"success", row.success}, {"queries_used", row.queries_used},
                           {"map", row.map},         {"final_label", row.final_label},
                           {"iterations", row.iterations}};
      if (timing) jr["wall_seconds"] = row.wall_seconds;
      rows.push_back(std::move(jr));
    }
    nlohmann::json jrep = {{"variant", to_string(rep.variant)},
                           {"fr", rep.fooling_rate},
                           {"qn", rep.mean_queries},
                           {"map", rep.mean_map},
                           {"videos", rows}};
    if (timing) jrep["time"] = rep.mean_seconds;
    out.push_back(std::move(jrep));
  }
  return out;
}

void write_iterations_csv(std::ostream& out, std::span<const IterationLog> logs) {
  out << kIterationHeader << '\n';
  out.precision(17);
  for (const auto& l : logs) {
    out << l.t << ',' << l.queries << ',' << l.value << ',' << l.rewards.common << ','
        << l.rewards.edgebox << ',' << l.rewards.sparse << ',' << l.rewards.representative << ',';
    for (auto b : l.frames) out << (b ? '1' : '0');
    out << ',';
    for (std::size_t i = 0; i < l.patches.size(); ++i) out << (i ? ";" : "") << l.patches[i];
    out << '\n';
  }
}

void write_report_csv(std::ostream& out, std::span<const BenchReport> reports, bool timing) {
  out << "variant,FR,QN,MAP" << (timing ? ",Time" : "") << '\n';
  out.precision(17);
  for (const auto& r : reports) {
    out << to_string(r.variant) << ',' << r.fooling_rate << ',' << r.mean_queries << ','
        << r.mean_map;
    if (timing) out << ',' << r.mean_seconds;
    out << '\n';
  }
}

}  // namespace astfocus
