#include "support.hpp"

#include <cmath>
#include <random>
#include <thread>

#include "astfocus/error.hpp"
#include "astfocus/trainer.hpp"
#include "httplib.h"

namespace astfocus::testing {

using autodiff::Matrix;
using autodiff::NodeId;
using nlohmann::json;

struct OracleServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(const std::string& message) { return {{"error", message}}; }

}  // namespace

OracleServer::OracleServer(ScoreOracle& oracle) : impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;

  server.Get("/v1/info", [this, &oracle](const httplib::Request&, httplib::Response& res) {
    ++requests_;
    if (!ready) return reply(res, 503, error_body("model not ready"));
    reply(res, 200, protocol::info_json(oracle.info()));
  });

  server.Post("/v1/query", [this, &oracle](const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    if (!ready) return reply(res, 503, error_body("model not ready"));
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      return reply(res, 400, error_body(e.what()));
    }
    const OracleInfo info = oracle.info();
    VideoShape shape;
    std::vector<int> requested;
    try {
      const auto& dims = body.at("shape");
      if (!dims.is_array() || dims.size() != 4 || body.at("dtype") != "f32le") {
        return reply(res, 400, error_body("shape must be [M,H,W,3] and dtype f32le"));
      }
      shape = {dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>()};
      if (dims[3].get<int>() != kChannels) return reply(res, 413, error_body("channels"));
      requested = body.at("requested_labels").get<std::vector<int>>();
    } catch (const json::exception& e) {
      return reply(res, 400, error_body(e.what()));
    }
    if (shape != info.shape) return reply(res, 413, error_body("shape mismatch"));
    for (int label : requested) {
      if (label < 0 || label >= info.num_classes) return reply(res, 400, error_body("label"));
    }
    try {
      const Video video = protocol::decode_video(shape, body.at("data_b64").get<std::string>());
      json out = protocol::query_response(oracle.query(video, requested));
      if (drop_top1) out.erase("top1");
      reply(res, 200, out);
    } catch (const Error& e) {
      reply(res, e.code() == ErrorCode::kShapeMismatch ? 413 : 400, error_body(e.what()));
    } catch (const json::exception& e) {
      reply(res, 400, error_body(e.what()));
    }
  });

  impl_->port = server.bind_to_any_port("127.0.0.1");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  server.wait_until_ready();
}

OracleServer::~OracleServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string OracleServer::url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port);
}

std::string closed_url() {
  httplib::Server probe;
  const int port = probe.bind_to_any_port("127.0.0.1");
  probe.stop();
  return "http://127.0.0.1:" + std::to_string(port);
}

Video ramp_video(VideoShape shape, double phase) {
  std::vector<double> data(shape.size());
  for (int f = 0; f < shape.frames; ++f) {
    for (int r = 0; r < shape.height; ++r) {
      for (int c = 0; c < shape.width; ++c) {
        for (int ch = 0; ch < kChannels; ++ch) {
          const double v = 0.5 + 0.4 * std::sin(0.7 * r + 0.3 * c + 0.5 * f + 1.1 * ch + phase);
          data[shape.index(f, r, c, ch)] = v;
        }
      }
    }
  }
  return Video(shape, std::move(data));
}

std::unique_ptr<RandomGraph> random_graph(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> pick(0, 6);
  std::uniform_int_distribution<int> size_pick(2, 5);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int k = 2 * size_pick(rng);
  const int depth = 2 + static_cast<int>(seed % 4);
  auto g = std::make_unique<RandomGraph>();
  auto& t = g->tape;

  auto random_matrix = [&](int rows, int cols, double scale) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = scale * normal(rng);
    return m;
  };
  g->bindings["W"] = random_matrix(k, k, 0.8 / std::sqrt(static_cast<double>(k)));
  g->bindings["x"] = random_matrix(k, 1, 0.7);
  g->bindings["b"] = random_matrix(k, 1, 0.3);
  g->bindings["u"] = random_matrix(k, 1, 1.0);

  const NodeId w = t.parameter("W", k, k);
  const NodeId x = t.parameter("x", k, 1);
  const NodeId b = t.parameter("b", k, 1);
  const NodeId u = t.input("u", k, 1);
  const NodeId half = t.constant(Matrix(k, 1, 0.5));

  NodeId node = x;
  for (int layer = 0; layer < depth; ++layer) {
    switch (pick(rng)) {
      case 0:
        node = t.tanh(t.add(t.matmul(w, node), b));
        break;
      case 1:
        node = t.mul(t.sigmoid(node), node);
        break;
      case 2:
        node = t.sub(t.log(t.softmax(node)), b);
        break;
      case 3:
        node = t.mul(t.exp(t.tanh(node)), half);
        break;
      case 4: {
        const int h = k / 2;
        node = t.concat({t.slice(node, h, k), t.slice(node, 0, h)});
        break;
      }
      case 5:
        node = t.add(node, t.matmul(w, t.sigmoid(t.mul(node, u))));
        break;
      default:
        node = t.log(t.add(t.exp(node), t.sigmoid(b)));
        break;
    }
  }
  const NodeId mixed = t.mul(node, u);
  g->output = seed % 2 == 0 ? t.sum(mixed) : t.mean(t.mul(mixed, node));
  return g;
}

double bandit_arm_probability(int updates, double learning_rate, double clip_ratio,
                              std::uint64_t seed) {
  std::vector<double> data(2 * 4 * kChannels);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(i % 7) / 7.0;
  const Video video({1, 2, 4}, data);
  const PatchGrid grid = make_patch_grid(2, 4, 2, 2, 2);
  const PolicyContext ctx = PolicyContext::build(video, grid, 1);

  PolicyDims dims;
  dims.frame_features = kRegionStats;
  dims.patches = 2;
  Rng rng(seed);
  Agents agents{SpatialPolicy::init(dims, rng), TemporalPolicy::init(dims, rng),
                Critic::init(critic_input_dim(dims), 64, rng)};
  PPOConfig cfg;
  cfg.learning_rate = learning_rate;
  cfg.clip_ratio = clip_ratio;

  for (int it = 0; it < updates; ++it) {
    const SpatialRollout roll = spatial_forward(agents.spatial, ctx, rng);
    Transition tr;
    tr.critic_input = {roll.state_summary,
                       std::vector<double>(2 * static_cast<std::size_t>(dims.frame_features), 0.0),
                       encode_spatial_action(roll.action, dims.patches),
                       {1.0, 0.0}};
    tr.spatial_action = roll.action;
    tr.temporal_action.bits = {1};
    tr.spatial_log_prob = roll.log_prob;
    tr.expected_spatial_action = expected_spatial_encoding(roll.dists);
    tr.spatial_reward = roll.action.patches[0] == 1 ? 1.0 : 0.0;
    tr.iteration = it;
    agents = ppo_update(agents, ctx, std::span(&tr, 1), cfg, {true, false});
  }
  const SpatialRollout last = spatial_forward(agents.spatial, ctx, rng);
  return last.dists[0][1];
}

}  // namespace astfocus::testing
