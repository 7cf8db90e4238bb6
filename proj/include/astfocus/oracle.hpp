#ifndef ASTFOCUS_ORACLE_HPP_
#define ASTFOCUS_ORACLE_HPP_

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "astfocus/tensor.hpp"
#include "json.hpp"

namespace astfocus {

struct LabelScore {
  int label = 0;
  double score = 0.0;
};

struct QueryResult {
  LabelScore top1;
  LabelScore top2;
  std::vector<LabelScore> requested;
  std::uint64_t query_index = 0;

  // Score of `label` among the requested ones (or top1/top2).
  std::optional<double> score_of(int label) const;
};

struct OracleInfo {
  int num_classes = 0;
  VideoShape shape;
};

// Black-box classifier: labels and confidences only. Implementations count
// every query and must tolerate concurrent callers.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual OracleInfo info() const = 0;
  virtual QueryResult query(const Video& video, std::span<const int> requested) = 0;
  virtual std::uint64_t queries() const = 0;
};

// In-process oracle backed by a full score vector.
class ScoreOracle : public Oracle {
 public:
  QueryResult query(const Video& video, std::span<const int> requested) override;
  std::uint64_t queries() const override { return counter_.load(); }

  // Probability vector over all classes. Pure.
  virtual std::vector<double> scores(const Video& video) const = 0;

 protected:
  void check_shape(const Video& video) const;

 private:
  std::atomic<std::uint64_t> counter_{0};
};

// scores = softmax_c(-beta * ||X - T_c||^2)
class TemplateOracle : public ScoreOracle {
 public:
  TemplateOracle(std::vector<Video> templates, double beta);

  OracleInfo info() const override;
  std::vector<double> scores(const Video& video) const override;

  const std::vector<Video>& templates() const { return templates_; }
  double beta() const { return beta_; }

 private:
  std::vector<Video> templates_;
  double beta_;
};

// Two classes: P(0) = clamp(0.5 + <w, X - ref>, 0, 1), P(1) = 1 - P(0).
class LinearOracle : public ScoreOracle {
 public:
  LinearOracle(Volume weights, Video reference);

  OracleInfo info() const override;
  std::vector<double> scores(const Video& video) const override;
  const Volume& weights() const { return weights_; }

 private:
  Volume weights_;
  Video reference_;
};

// The same score vector for every input.
class ConstantOracle : public ScoreOracle {
 public:
  ConstantOracle(VideoShape shape, std::vector<double> scores);

  OracleInfo info() const override;
  std::vector<double> scores(const Video& video) const override;

 private:
  VideoShape shape_;
  std::vector<double> scores_;
};

// Gradient of P(label | video) for a TemplateOracle; kUnsupportedOracle for
// anything else.
Volume analytic_gradient(const Oracle& oracle, const Video& video, int label);

// Enforces a hard query cap on top of another oracle. Queries beyond the cap
// throw kBudgetExhausted and are not forwarded.
class BudgetedOracle : public Oracle {
 public:
  BudgetedOracle(Oracle& inner, std::uint64_t cap) : inner_(inner), cap_(cap) {}

  OracleInfo info() const override { return inner_.info(); }
  QueryResult query(const Video& video, std::span<const int> requested) override;
  std::uint64_t queries() const override { return used_.load(); }
  std::uint64_t cap() const { return cap_; }
  std::uint64_t remaining() const { return cap_ - used_.load(); }

 private:
  Oracle& inner_;
  std::uint64_t cap_;
  std::atomic<std::uint64_t> used_{0};
};

// Client for the HTTP oracle protocol (GET /v1/info, POST /v1/query).
class RemoteOracle : public Oracle {
 public:
  // base_url like "http://127.0.0.1:8080".
  explicit RemoteOracle(std::string base_url, double timeout_seconds = 30.0);
  ~RemoteOracle() override;

  OracleInfo info() const override;
  QueryResult query(const Video& video, std::span<const int> requested) override;
  std::uint64_t queries() const override { return counter_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<std::uint64_t> counter_{0};
};

namespace protocol {

std::string base64_encode(std::span<const unsigned char> bytes);
// Throws kProtocolError on malformed input.
std::vector<unsigned char> base64_decode(const std::string& text);

// Little-endian f32, frame-major row-major, base64.
std::string encode_video(const Video& video);
// Throws kProtocolError (bad payload) or kShapeMismatch (wrong length).
Video decode_video(VideoShape shape, const std::string& data_b64);

nlohmann::json info_json(const OracleInfo& info);
OracleInfo parse_info(const nlohmann::json& body);
nlohmann::json query_request(const Video& video, std::span<const int> requested);
nlohmann::json query_response(const QueryResult& result);
// Throws kProtocolError when a required field is missing or mistyped.
QueryResult parse_query_response(const nlohmann::json& body);

}  // namespace protocol

}  // namespace astfocus

#endif  // ASTFOCUS_ORACLE_HPP_
