#include "astfocus/oracle.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "astfocus/error.hpp"
#include "httplib.h"

namespace astfocus {

std::optional<double> QueryResult::score_of(int label) const {
  for (const auto& r : requested) {
    if (r.label == label) return r.score;
  }
  if (top1.label == label) return top1.score;
  if (top2.label == label) return top2.score;
  return std::nullopt;
}

namespace {

QueryResult make_result(std::span<const double> scores, std::span<const int> requested,
                        std::uint64_t index) {
  const int n = static_cast<int>(scores.size());
  int best = 0;
  for (int c = 1; c < n; ++c) {
    if (scores[static_cast<std::size_t>(c)] > scores[static_cast<std::size_t>(best)]) best = c;
  }
  int second = best == 0 ? 1 : 0;
  for (int c = 0; c < n; ++c) {
    if (c == best) continue;
    if (scores[static_cast<std::size_t>(c)] > scores[static_cast<std::size_t>(second)]) {
      second = c;
    }
  }
  QueryResult r;
  r.top1 = {best, scores[static_cast<std::size_t>(best)]};
  r.top2 = {second, scores[static_cast<std::size_t>(second)]};
  for (int label : requested) {
    if (label < 0 || label >= n) {
      throw Error(ErrorCode::kInvalidArgument, "requested label " + std::to_string(label));
    }
    r.requested.push_back({label, scores[static_cast<std::size_t>(label)]});
  }
  r.query_index = index;
  return r;
}

}  // namespace

void ScoreOracle::check_shape(const Video& video) const {
  if (video.shape() != info().shape) {
    throw Error(ErrorCode::kShapeMismatch, "query video shape differs from oracle input");
  }
}

QueryResult ScoreOracle::query(const Video& video, std::span<const int> requested) {
  check_shape(video);
  const auto s = scores(video);
  return make_result(s, requested, counter_.fetch_add(1) + 1);
}

TemplateOracle::TemplateOracle(std::vector<Video> templates, double beta)
    : templates_(std::move(templates)), beta_(beta) {
  if (templates_.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "template oracle needs >= 2 classes");
  }
  if (!(beta_ >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "beta must be >= 0");
  for (const auto& t : templates_) {
    if (t.shape() != templates_[0].shape()) {
      throw Error(ErrorCode::kShapeMismatch, "templates differ in shape");
    }
  }
}

OracleInfo TemplateOracle::info() const {
  return {static_cast<int>(templates_.size()), templates_[0].shape()};
}

std::vector<double> TemplateOracle::scores(const Video& video) const {
  check_shape(video);
  std::vector<double> logits(templates_.size());
  const auto x = video.data();
  for (std::size_t c = 0; c < templates_.size(); ++c) {
    const auto t = templates_[c].data();
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - t[i];
      d2 += d * d;
    }
    logits[c] = -beta_ * d2;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logits) v /= z;
  return logits;
}

LinearOracle::LinearOracle(Volume weights, Video reference)
    : weights_(std::move(weights)), reference_(std::move(reference)) {
  if (weights_.shape() != reference_.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "linear oracle weights vs reference");
  }
}

OracleInfo LinearOracle::info() const { return {2, reference_.shape()}; }

std::vector<double> LinearOracle::scores(const Video& video) const {
  check_shape(video);
  double s = 0.5;
  for (std::size_t i = 0; i < video.size(); ++i) {
    s += weights_[i] * (video[i] - reference_[i]);
  }
  s = std::clamp(s, 0.0, 1.0);
  return {s, 1.0 - s};
}

ConstantOracle::ConstantOracle(VideoShape shape, std::vector<double> scores)
    : shape_(shape), scores_(std::move(scores)) {
  if (scores_.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need >= 2 classes");
}

OracleInfo ConstantOracle::info() const {
  return {static_cast<int>(scores_.size()), shape_};
}

std::vector<double> ConstantOracle::scores(const Video& video) const {
  check_shape(video);
  return scores_;
}

Volume analytic_gradient(const Oracle& oracle, const Video& video, int label) {
  const auto* tmpl = dynamic_cast<const TemplateOracle*>(&oracle);
  if (!tmpl) {
    throw Error(ErrorCode::kUnsupportedOracle, "analytic gradient needs a TemplateOracle");
  }
  const auto& templates = tmpl->templates();
  if (label < 0 || static_cast<std::size_t>(label) >= templates.size()) {
    throw Error(ErrorCode::kInvalidArgument, "label out of range");
  }
  const auto p = tmpl->scores(video);
  // dP_l/dX = 2 beta P_l (T_l - sum_c P_c T_c)
  Volume grad(video.shape());
  const double k = 2.0 * tmpl->beta() * p[static_cast<std::size_t>(label)];
  const auto& own = templates[static_cast<std::size_t>(label)];
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double mix = 0.0;
    for (std::size_t c = 0; c < templates.size(); ++c) mix += p[c] * templates[c][i];
    grad[i] = k * (own[i] - mix);
  }
  return grad;
}

QueryResult BudgetedOracle::query(const Video& video, std::span<const int> requested) {
  std::uint64_t used = used_.load();
  do {
    if (used >= cap_) {
      throw Error(ErrorCode::kBudgetExhausted,
                  "query cap of " + std::to_string(cap_) + " reached");
    }
  } while (!used_.compare_exchange_weak(used, used + 1));
  return inner_.query(video, requested);
}

// ---------------------------------------------------------------------------
// wire protocol

namespace protocol {

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::kProtocolError, "base64 length");
  std::vector<unsigned char> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorCode::kProtocolError, "invalid base64");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string encode_video(const Video& video) {
  std::vector<unsigned char> raw(video.size() * 4);
  for (std::size_t i = 0; i < video.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(video[i]));
    for (int b = 0; b < 4; ++b) raw[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return base64_encode(raw);
}

Video decode_video(VideoShape shape, const std::string& data_b64) {
  const auto raw = base64_decode(data_b64);
  if (raw.size() != shape.size() * 4) {
    throw Error(ErrorCode::kShapeMismatch, "payload length differs from declared shape");
  }
  std::vector<double> data(shape.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{raw[4 * i + b]} << (8 * b);
    data[i] = std::bit_cast<float>(bits);
    if (!(data[i] >= 0.0 && data[i] <= 1.0)) {
      throw Error(ErrorCode::kProtocolError, "pixel value outside [0,1]");
    }
  }
  return Video(shape, std::move(data));
}

nlohmann::json info_json(const OracleInfo& info) {
  return {{"num_classes", info.num_classes},
          {"frames", info.shape.frames},
          {"height", info.shape.height},
          {"width", info.shape.width},
          {"channels", kChannels}};
}

OracleInfo parse_info(const nlohmann::json& body) {
  try {
    OracleInfo info;
    info.num_classes = body.at("num_classes").get<int>();
    info.shape = {body.at("frames").get<int>(), body.at("height").get<int>(),
                  body.at("width").get<int>()};
    if (body.at("channels").get<int>() != kChannels || info.num_classes < 2) {
      throw Error(ErrorCode::kProtocolError, "unsupported info");
    }
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("info: ") + e.what());
  }
}

nlohmann::json query_request(const Video& video, std::span<const int> requested) {
  const auto& s = video.shape();
  return {{"shape", {s.frames, s.height, s.width, kChannels}},
          {"dtype", "f32le"},
          {"data_b64", encode_video(video)},
          {"requested_labels", std::vector<int>(requested.begin(), requested.end())}};
}

nlohmann::json query_response(const QueryResult& result) {
  auto requested = nlohmann::json::array();
  for (const auto& r : result.requested) {
    requested.push_back({{"label", r.label}, {"score", r.score}});
  }
  return {{"top1", {{"label", result.top1.label}, {"score", result.top1.score}}},
          {"top2", {{"label", result.top2.label}, {"score", result.top2.score}}},
          {"requested", std::move(requested)},
          {"query_index", result.query_index}};
}

QueryResult parse_query_response(const nlohmann::json& body) {
  auto pair = [](const nlohmann::json& j) {
    LabelScore ls{j.at("label").get<int>(), j.at("score").get<double>()};
    if (!(ls.score >= 0.0 && ls.score <= 1.0)) {
      throw Error(ErrorCode::kProtocolError, "score outside [0,1]");
    }
    return ls;
  };
  try {
    QueryResult r;
    r.top1 = pair(body.at("top1"));
    r.top2 = pair(body.at("top2"));
    for (const auto& item : body.at("requested")) r.requested.push_back(pair(item));
    r.query_index = body.at("query_index").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("query response: ") + e.what());
  }
}

}  // namespace protocol

// ---------------------------------------------------------------------------
// remote client

struct RemoteOracle::Impl {
  std::string base_url;
  double timeout;
  mutable std::optional<OracleInfo> info;

  httplib::Client client() const {
    httplib::Client c(base_url);
    const auto sec = static_cast<time_t>(timeout);
    const auto usec = static_cast<time_t>((timeout - static_cast<double>(sec)) * 1e6);
    c.set_connection_timeout(sec, usec);
    c.set_read_timeout(sec, usec);
    c.set_write_timeout(sec, usec);
    return c;
  }
};

RemoteOracle::RemoteOracle(std::string base_url, double timeout_seconds)
    : impl_(std::make_unique<Impl>(Impl{std::move(base_url), timeout_seconds, {}})) {}

RemoteOracle::~RemoteOracle() = default;

namespace {

nlohmann::json parse_body(const std::string& body) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("response body: ") + e.what());
  }
}

void check_status(int status, const std::string& body) {
  if (status == 200) return;
  if (status == 413) throw Error(ErrorCode::kShapeMismatch, "server rejected shape: " + body);
  if (status == 503) throw Error(ErrorCode::kRemoteUnavailable, "model not ready");
  throw Error(ErrorCode::kProtocolError, "HTTP " + std::to_string(status) + ": " + body);
}

}  // namespace

OracleInfo RemoteOracle::info() const {
  if (impl_->info) return *impl_->info;
  auto cli = impl_->client();
  auto res = cli.Get("/v1/info");
  if (!res) {
    throw Error(ErrorCode::kRemoteUnavailable,
                impl_->base_url + ": " + httplib::to_string(res.error()));
  }
  check_status(res->status, res->body);
  impl_->info = protocol::parse_info(parse_body(res->body));
  return *impl_->info;
}

QueryResult RemoteOracle::query(const Video& video, std::span<const int> requested) {
  const auto body = protocol::query_request(video, requested).dump();
  auto cli = impl_->client();
  auto res = cli.Post("/v1/query", body, "application/json");
  if (!res) {
    throw Error(ErrorCode::kRemoteUnavailable,
                impl_->base_url + ": " + httplib::to_string(res.error()));
  }
  counter_.fetch_add(1);
  check_status(res->status, res->body);
  return protocol::parse_query_response(parse_body(res->body));
}

}  // namespace astfocus
