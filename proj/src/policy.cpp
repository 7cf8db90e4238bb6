#include "astfocus/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include "astfocus/error.hpp"
#include "json.hpp"

namespace astfocus {

using autodiff::Matrix;
using autodiff::NodeId;
using autodiff::Tape;

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(std::string name, Matrix value) {
  if (contains(name)) throw Error(ErrorCode::kInvalidArgument, "duplicate param " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

namespace {

template <typename Names>
std::size_t find_name(const Names& names, std::string_view name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown parameter " + std::string(name));
  }
  return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

const Matrix& ParamSet::at(std::string_view name) const {
  return values_[find_name(names_, name)];
}

Matrix& ParamSet::at(std::string_view name) { return values_[find_name(names_, name)]; }

bool ParamSet::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParamSet::value_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

void ParamSet::bind(autodiff::Bindings& bindings) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    bindings.insert_or_assign(names_[i], values_[i]);
  }
}

void ParamSet::apply(const autodiff::Gradients& grads, double scale) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    auto it = grads.find(names_[i]);
    if (it == grads.end()) continue;
    if (!it->second.same_shape(values_[i])) {
      throw Error(ErrorCode::kShapeMismatch, "gradient for " + names_[i]);
    }
    for (std::size_t k = 0; k < values_[i].size(); ++k) {
      values_[i][k] += scale * it->second[k];
    }
  }
}

bool ParamSet::all_finite() const {
  for (const auto& v : values_) {
    for (double x : v.data()) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.names_ != b.names_) return false;
  for (std::size_t i = 0; i < a.values_.size(); ++i) {
    if (!a.values_[i].same_shape(b.values_[i])) return false;
    if (!std::equal(a.values_[i].data().begin(), a.values_[i].data().end(),
                    b.values_[i].data().begin())) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// numeric helpers

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

// y = W x + b
std::vector<double> affine(const Matrix& w, const Matrix& b, std::span<const double> x) {
  if (static_cast<std::size_t>(w.cols()) != x.size() || b.rows() != w.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "affine map input");
  }
  std::vector<double> y(static_cast<std::size_t>(w.rows()));
  for (int r = 0; r < w.rows(); ++r) {
    double s = b[static_cast<std::size_t>(r)];
    const double* row = w.data().data() + static_cast<std::size_t>(r) * w.cols();
    for (int c = 0; c < w.cols(); ++c) s += row[c] * x[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] = s;
  }
  return y;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

void accumulate(std::vector<double>& acc, std::span<const double> v) {
  if (acc.empty()) acc.assign(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

void scale(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

Matrix uniform_matrix(int rows, int cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = u(rng);
  return m;
}

void add_lstm(ParamSet& params, const std::string& prefix, int input, int hidden,
              Rng* rng) {
  const int fan_in = input + hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (const char* gate : {"i", "f", "o", "g"}) {
    params.add(prefix + "W_" + gate, rng ? uniform_matrix(hidden, fan_in, bound, *rng)
                                         : Matrix(hidden, fan_in));
  }
  for (const char* gate : {"i", "f", "o", "g"}) {
    params.add(prefix + "b_" + gate, Matrix(hidden, 1));
  }
}

// Output heads start small so the initial policies are close to uniform.
constexpr double kHeadInitScale = 0.01;

ParamSet spatial_params(const PolicyDims& d, Rng* rng) {
  ParamSet p;
  auto dense = [&](int rows, int cols, double gain) {
    return rng ? uniform_matrix(rows, cols, gain / std::sqrt(static_cast<double>(cols)), *rng)
               : Matrix(rows, cols);
  };
  p.add("embed.W1", dense(d.patch_embed, d.patch_features, 1.0));
  p.add("embed.b1", Matrix(d.patch_embed, 1));
  p.add("embed.W2", dense(d.patch_embed, d.patch_embed, 1.0));
  p.add("embed.b2", Matrix(d.patch_embed, 1));
  add_lstm(p, "lstm.", d.frame_features + d.patch_embed, d.hidden, rng);
  p.add("head.W", dense(d.patches, d.hidden, kHeadInitScale));
  p.add("head.b", Matrix(d.patches, 1));
  return p;
}

ParamSet temporal_params(const PolicyDims& d, Rng* rng) {
  ParamSet p;
  auto dense = [&](int rows, int cols, double gain) {
    return rng ? uniform_matrix(rows, cols, gain / std::sqrt(static_cast<double>(cols)), *rng)
               : Matrix(rows, cols);
  };
  p.add("global.W", dense(d.frame_features, d.frame_features, 1.0));
  p.add("global.b", Matrix(d.frame_features, 1));
  add_lstm(p, "lstm.", 2 * d.frame_features, d.hidden, rng);
  p.add("head.W", dense(1, d.hidden, kHeadInitScale));
  p.add("head.b", Matrix(1, 1));
  return p;
}

std::vector<double> patch_embedding(const ParamSet& p, std::span<const double> stats) {
  auto hidden = affine(p.at("embed.W1"), p.at("embed.b1"), stats);
  for (double& v : hidden) v = std::tanh(v);
  return affine(p.at("embed.W2"), p.at("embed.b2"), hidden);
}

void check_context(const PolicyDims& d, const PolicyContext& ctx, bool need_patches) {
  if (ctx.frames() < 1) throw Error(ErrorCode::kShapeMismatch, "no frames in context");
  for (const auto& f : ctx.frame_features) {
    if (static_cast<int>(f.size()) != d.frame_features) {
      throw Error(ErrorCode::kShapeMismatch, "frame feature dim");
    }
  }
  if (need_patches && ctx.patches() != d.patches) {
    throw Error(ErrorCode::kShapeMismatch, "patch count differs from policy head");
  }
}

}  // namespace

LstmParams LstmParams::from(const ParamSet& p, std::string_view prefix) {
  const std::string s(prefix);
  return {p.at(s + "W_i"), p.at(s + "W_f"), p.at(s + "W_o"), p.at(s + "W_g"),
          p.at(s + "b_i"), p.at(s + "b_f"), p.at(s + "b_o"), p.at(s + "b_g")};
}

LstmState lstm_step(const LstmParams& params, std::span<const double> input,
                    const LstmState& state) {
  const int hidden = params.hidden_dim();
  if (static_cast<int>(input.size()) != params.input_dim() ||
      static_cast<int>(state.h.size()) != hidden ||
      static_cast<int>(state.c.size()) != hidden) {
    throw Error(ErrorCode::kShapeMismatch, "lstm_step dims");
  }
  const auto z = concat(input, state.h);
  auto i = affine(params.w_i, params.b_i, z);
  auto f = affine(params.w_f, params.b_f, z);
  auto o = affine(params.w_o, params.b_o, z);
  auto g = affine(params.w_g, params.b_g, z);
  LstmState next;
  next.h.resize(static_cast<std::size_t>(hidden));
  next.c.resize(static_cast<std::size_t>(hidden));
  for (std::size_t k = 0; k < next.c.size(); ++k) {
    next.c[k] = sigmoid(f[k]) * state.c[k] + sigmoid(i[k]) * std::tanh(g[k]);
    next.h[k] = sigmoid(o[k]) * std::tanh(next.c[k]);
  }
  return next;
}

PolicyContext PolicyContext::build(const Video& video, const PatchGrid& grid,
                                   int cells_per_side) {
  PolicyContext ctx;
  const int frames = video.shape().frames;
  for (int f = 0; f < frames; ++f) {
    ctx.frame_features.push_back(extract_frame_features(video, f, cells_per_side).values);
    std::vector<std::vector<double>> per_patch;
    per_patch.reserve(grid.size());
    for (const auto& rect : grid.rects) {
      per_patch.push_back(extract_patch_features(video, f, rect).values);
    }
    ctx.patch_features.push_back(std::move(per_patch));
  }
  return ctx;
}

SpatialPolicy::SpatialPolicy(PolicyDims dims, ParamSet params)
    : dims_(dims), params_(std::move(params)) {}

SpatialPolicy SpatialPolicy::init(const PolicyDims& dims, Rng& rng) {
  return SpatialPolicy(dims, spatial_params(dims, &rng));
}

SpatialPolicy SpatialPolicy::zeros(const PolicyDims& dims) {
  return SpatialPolicy(dims, spatial_params(dims, nullptr));
}

TemporalPolicy::TemporalPolicy(PolicyDims dims, ParamSet params)
    : dims_(dims), params_(std::move(params)) {}

TemporalPolicy TemporalPolicy::init(const PolicyDims& dims, Rng& rng) {
  return TemporalPolicy(dims, temporal_params(dims, &rng));
}

TemporalPolicy TemporalPolicy::zeros(const PolicyDims& dims) {
  return TemporalPolicy(dims, temporal_params(dims, nullptr));
}

// ---------------------------------------------------------------------------
// sampling

int sample_categorical(std::span<const double> dist, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (dist[k] > 0.0) last_positive = static_cast<int>(k);
    acc += dist[k];
    if (x < acc) return static_cast<int>(k);
  }
  return last_positive;
}

double spatial_log_prob(std::span<const std::vector<double>> dists,
                        const SpatialAction& action) {
  if (dists.size() != action.frames()) {
    throw Error(ErrorCode::kShapeMismatch, "spatial action length");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    lp += std::log(std::max(dists[i][static_cast<std::size_t>(action.patches[i])], kProbFloor));
  }
  return lp;
}

SpatialSample sample_spatial(std::span<const std::vector<double>> dists, Rng& rng) {
  SpatialSample s;
  s.action.patches.reserve(dists.size());
  for (const auto& d : dists) s.action.patches.push_back(sample_categorical(d, rng));
  s.log_prob = spatial_log_prob(dists, s.action);
  return s;
}

double temporal_log_prob(std::span<const double> probs, const TemporalAction& action) {
  if (probs.size() != action.frames()) {
    throw Error(ErrorCode::kShapeMismatch, "temporal action length");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    lp += action.bits[i] ? std::log(p) : std::log(1.0 - p);
  }
  return lp;
}

TemporalSample sample_temporal(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TemporalSample s;
  s.action.bits.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    s.action.bits[i] = u(rng) < probs[i] ? 1 : 0;
  }
  if (s.action.selected() == 0 && !probs.empty()) {
    const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
    s.action.bits[static_cast<std::size_t>(best)] = 1;
    s.fallback = true;
  }
  s.log_prob = temporal_log_prob(probs, s.action);
  return s;
}

// ---------------------------------------------------------------------------
// numeric forwards

namespace {

SpatialRollout spatial_rollout(const SpatialPolicy& policy, const PolicyContext& ctx,
                               Rng* rng, const SpatialAction* fixed) {
  const auto& d = policy.dims();
  check_context(d, ctx, true);
  const auto& p = policy.params();
  const auto lstm = LstmParams::from(p, "lstm.");
  const int frames = ctx.frames();

  SpatialRollout out;
  out.action.patches.resize(static_cast<std::size_t>(frames));
  auto state = LstmState::zeros(d.hidden);
  std::vector<double> embed(static_cast<std::size_t>(d.patch_embed), 0.0);
  for (int i = 0; i < frames; ++i) {
    const auto input = concat(ctx.frame_features[static_cast<std::size_t>(i)], embed);
    accumulate(out.state_summary, input);
    state = lstm_step(lstm, input, state);
    auto dist = softmax(affine(p.at("head.W"), p.at("head.b"), state.h));
    int choice = 0;
    if (fixed) {
      choice = fixed->patches[static_cast<std::size_t>(i)];
      if (choice < 0 || choice >= d.patches) {
        throw Error(ErrorCode::kInvalidArgument, "patch index out of range");
      }
    } else {
      choice = sample_categorical(dist, *rng);
    }
    out.action.patches[static_cast<std::size_t>(i)] = choice;
    out.dists.push_back(std::move(dist));
    embed = patch_embedding(
        p, ctx.patch_features[static_cast<std::size_t>(i)][static_cast<std::size_t>(choice)]);
  }
  scale(out.state_summary, 1.0 / frames);
  out.log_prob = spatial_log_prob(out.dists, out.action);
  return out;
}

std::vector<double> global_embedding(const ParamSet& p, const PolicyContext& ctx,
                                     std::vector<double>* mean_out) {
  std::vector<double> mean;
  for (const auto& f : ctx.frame_features) accumulate(mean, f);
  scale(mean, 1.0 / ctx.frames());
  auto eg = affine(p.at("global.W"), p.at("global.b"), mean);
  if (mean_out) *mean_out = std::move(mean);
  return eg;
}

}  // namespace

SpatialRollout spatial_forward(const SpatialPolicy& policy, const PolicyContext& ctx,
                               Rng& rng) {
  return spatial_rollout(policy, ctx, &rng, nullptr);
}

SpatialRollout spatial_forward(const SpatialPolicy& policy, const PolicyContext& ctx,
                               const SpatialAction& action) {
  if (static_cast<int>(action.frames()) != ctx.frames()) {
    throw Error(ErrorCode::kShapeMismatch, "spatial action length");
  }
  return spatial_rollout(policy, ctx, nullptr, &action);
}

TemporalRollout temporal_forward(const TemporalPolicy& policy, const PolicyContext& ctx) {
  const auto& d = policy.dims();
  check_context(d, ctx, false);
  const auto& p = policy.params();
  const auto lstm = LstmParams::from(p, "lstm.");

  TemporalRollout out;
  std::vector<double> mean;
  const auto eg = global_embedding(p, ctx, &mean);
  out.state_summary = concat(mean, eg);
  auto state = LstmState::zeros(d.hidden);
  for (const auto& e : ctx.frame_features) {
    state = lstm_step(lstm, concat(e, eg), state);
    const auto logit = affine(p.at("head.W"), p.at("head.b"), state.h);
    out.probs.push_back(sigmoid(logit[0]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// differentiable graphs

std::vector<NodeId> register_params(Tape& tape, const ParamSet& params) {
  std::vector<NodeId> ids;
  for (const auto& name : params.names()) {
    const auto& m = params.at(name);
    ids.push_back(tape.parameter(name, m.rows(), m.cols()));
  }
  return ids;
}

namespace {

struct LstmNodes {
  NodeId w_i, w_f, w_o, w_g, b_i, b_f, b_o, b_g;
};

NodeId param_node(const ParamSet& params, const std::vector<NodeId>& ids,
                  std::string_view name) {
  return ids[find_name(params.names(), name)];
}

LstmNodes lstm_nodes(const ParamSet& p, const std::vector<NodeId>& ids) {
  return {param_node(p, ids, "lstm.W_i"), param_node(p, ids, "lstm.W_f"),
          param_node(p, ids, "lstm.W_o"), param_node(p, ids, "lstm.W_g"),
          param_node(p, ids, "lstm.b_i"), param_node(p, ids, "lstm.b_f"),
          param_node(p, ids, "lstm.b_o"), param_node(p, ids, "lstm.b_g")};
}

std::pair<NodeId, NodeId> lstm_graph(Tape& t, const LstmNodes& n, NodeId input, NodeId h,
                                     NodeId c) {
  const NodeId z = t.concat({input, h});
  const NodeId i = t.sigmoid(t.add(t.matmul(n.w_i, z), n.b_i));
  const NodeId f = t.sigmoid(t.add(t.matmul(n.w_f, z), n.b_f));
  const NodeId o = t.sigmoid(t.add(t.matmul(n.w_o, z), n.b_o));
  const NodeId g = t.tanh(t.add(t.matmul(n.w_g, z), n.b_g));
  const NodeId c_next = t.add(t.mul(f, c), t.mul(i, g));
  const NodeId h_next = t.mul(o, t.tanh(c_next));
  return {h_next, c_next};
}

NodeId negate(Tape& t, NodeId x) {
  return t.sub(t.constant(Matrix(t.rows(x), t.cols(x))), x);
}

}  // namespace

PolicyGraph build_spatial_graph(Tape& t, const SpatialPolicy& policy,
                                const PolicyContext& ctx, const SpatialAction& action) {
  const auto& d = policy.dims();
  check_context(d, ctx, true);
  if (static_cast<int>(action.frames()) != ctx.frames()) {
    throw Error(ErrorCode::kShapeMismatch, "spatial action length");
  }
  const auto& p = policy.params();
  const auto ids = register_params(t, p);
  const auto lstm = lstm_nodes(p, ids);
  const NodeId w1 = param_node(p, ids, "embed.W1");
  const NodeId b1 = param_node(p, ids, "embed.b1");
  const NodeId w2 = param_node(p, ids, "embed.W2");
  const NodeId b2 = param_node(p, ids, "embed.b2");
  const NodeId head_w = param_node(p, ids, "head.W");
  const NodeId head_b = param_node(p, ids, "head.b");

  NodeId h = t.constant(Matrix(d.hidden, 1));
  NodeId c = t.constant(Matrix(d.hidden, 1));
  NodeId embed = t.constant(Matrix(d.patch_embed, 1));
  std::vector<NodeId> log_probs;
  std::vector<NodeId> entropies;
  for (int i = 0; i < ctx.frames(); ++i) {
    const auto fi = static_cast<std::size_t>(i);
    const NodeId e = t.constant(Matrix::column(ctx.frame_features[fi]));
    std::tie(h, c) = lstm_graph(t, lstm, t.concat({e, embed}), h, c);
    const NodeId dist = t.softmax(t.add(t.matmul(head_w, h), head_b));
    const int a = action.patches[fi];
    if (a < 0 || a >= d.patches) {
      throw Error(ErrorCode::kInvalidArgument, "patch index out of range");
    }
    log_probs.push_back(t.log(t.slice(dist, a, a + 1)));
    entropies.push_back(negate(t, t.sum(t.mul(dist, t.log(dist)))));
    const NodeId stats = t.constant(
        Matrix::column(ctx.patch_features[fi][static_cast<std::size_t>(a)]));
    embed = t.add(t.matmul(w2, t.tanh(t.add(t.matmul(w1, stats), b1))), b2);
  }
  return {t.sum(t.concat(log_probs)), t.sum(t.concat(entropies))};
}

PolicyGraph build_temporal_graph(Tape& t, const TemporalPolicy& policy,
                                 const PolicyContext& ctx, const TemporalAction& action) {
  const auto& d = policy.dims();
  check_context(d, ctx, false);
  if (static_cast<int>(action.frames()) != ctx.frames()) {
    throw Error(ErrorCode::kShapeMismatch, "temporal action length");
  }
  const auto& p = policy.params();
  const auto ids = register_params(t, p);
  const auto lstm = lstm_nodes(p, ids);
  const NodeId head_w = param_node(p, ids, "head.W");
  const NodeId head_b = param_node(p, ids, "head.b");

  std::vector<double> mean;
  for (const auto& f : ctx.frame_features) accumulate(mean, f);
  scale(mean, 1.0 / ctx.frames());
  const NodeId eg = t.add(t.matmul(param_node(p, ids, "global.W"),
                                   t.constant(Matrix::column(mean))),
                          param_node(p, ids, "global.b"));
  const NodeId one = t.constant(Matrix::scalar(1.0));

  NodeId h = t.constant(Matrix(d.hidden, 1));
  NodeId c = t.constant(Matrix(d.hidden, 1));
  std::vector<NodeId> log_probs;
  std::vector<NodeId> entropies;
  for (int i = 0; i < ctx.frames(); ++i) {
    const auto fi = static_cast<std::size_t>(i);
    const NodeId e = t.constant(Matrix::column(ctx.frame_features[fi]));
    std::tie(h, c) = lstm_graph(t, lstm, t.concat({e, eg}), h, c);
    const NodeId prob = t.sigmoid(t.add(t.matmul(head_w, h), head_b));
    const NodeId not_prob = t.sub(one, prob);
    const NodeId log_p = t.log(prob);
    const NodeId log_q = t.log(not_prob);
    log_probs.push_back(action.bits[fi] ? log_p : log_q);
    entropies.push_back(
        negate(t, t.add(t.mul(prob, log_p), t.mul(not_prob, log_q))));
  }
  return {t.sum(t.concat(log_probs)), t.sum(t.concat(entropies))};
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr const char* kCheckpointMagic = "astfocus-params";

nlohmann::ordered_json dims_json(const PolicyDims& d) {
  return {{"frame_features", d.frame_features}, {"patch_features", d.patch_features},
          {"hidden", d.hidden},                 {"patch_embed", d.patch_embed},
          {"patches", d.patches}};
}

}  // namespace

void save_checkpoint(std::ostream& out, const CheckpointInfo& info, const ParamSet& params) {
  nlohmann::ordered_json manifest;
  manifest["magic"] = kCheckpointMagic;
  manifest["kind"] = info.kind;
  manifest["version"] = info.version;
  manifest["seed"] = info.seed;
  manifest["dims"] = dims_json(info.dims);
  manifest["dtype"] = "f64le";
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& name : params.names()) {
    const auto& m = params.at(name);
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  manifest["tensors"] = std::move(tensors);
  out << manifest.dump() << '\n';
  for (const auto& name : params.names()) {
    for (double v : params.at(name).data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      out.write(b, 8);
    }
  }
  if (!out) throw Error(ErrorCode::kIoError, "checkpoint write failed");
}

ParamSet load_checkpoint(std::istream& in, CheckpointInfo* info) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kFormatError, "empty checkpoint");
  ParamSet params;
  try {
    const auto manifest = nlohmann::json::parse(line);
    if (manifest.at("magic").get<std::string>() != kCheckpointMagic ||
        manifest.at("dtype").get<std::string>() != "f64le") {
      throw Error(ErrorCode::kFormatError, "not a parameter checkpoint");
    }
    if (info) {
      const auto& d = manifest.at("dims");
      info->kind = manifest.at("kind").get<std::string>();
      info->version = manifest.at("version").get<int>();
      info->seed = manifest.at("seed").get<std::uint64_t>();
      info->dims = {d.at("frame_features").get<int>(), d.at("patch_features").get<int>(),
                    d.at("hidden").get<int>(), d.at("patch_embed").get<int>(),
                    d.at("patches").get<int>()};
    }
    for (const auto& t : manifest.at("tensors")) {
      Matrix m(t.at("rows").get<int>(), t.at("cols").get<int>());
      for (std::size_t i = 0; i < m.size(); ++i) {
        unsigned char b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) {
          throw Error(ErrorCode::kFormatError, "truncated checkpoint payload");
        }
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= std::uint64_t{b[k]} << (8 * k);
        m[i] = std::bit_cast<double>(bits);
      }
      params.add(t.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("checkpoint manifest: ") + e.what());
  }
  return params;
}

}  // namespace astfocus
