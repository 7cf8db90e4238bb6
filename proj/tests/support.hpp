#ifndef ASTFOCUS_TESTS_SUPPORT_HPP_
#define ASTFOCUS_TESTS_SUPPORT_HPP_

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "astfocus/autodiff.hpp"
#include "astfocus/error.hpp"
#include "astfocus/oracle.hpp"
#include "astfocus/policy.hpp"
#include "astfocus/tensor.hpp"

namespace astfocus::testing {

// Serves a ScoreOracle over the HTTP protocol on 127.0.0.1 from a background
// thread for the lifetime of the object.
class OracleServer {
 public:
  explicit OracleServer(ScoreOracle& oracle);
  ~OracleServer();
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  std::string url() const;
  int requests() const { return requests_.load(); }

  // 503 on every request while false.
  std::atomic<bool> ready{true};
  // Strip "top1" from query responses.
  std::atomic<bool> drop_top1{false};

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<int> requests_{0};
};

// The code of the astfocus::Error thrown by f, if any.
template <class F>
std::optional<ErrorCode> error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// A port nothing listens on.
std::string closed_url();

// Deterministic video whose values vary smoothly in every axis.
Video ramp_video(VideoShape shape, double phase = 0.0);

// A scalar-output graph of `depth` random layers over one or two parameters,
// with every op of the tape represented across seeds.
struct RandomGraph {
  autodiff::Tape tape;
  autodiff::Bindings bindings;
  autodiff::NodeId output;
};
std::unique_ptr<RandomGraph> random_graph(std::uint64_t seed);

// Probability of the rewarded arm after `updates` PPO steps on a single-frame
// spatial bandit with two patches, arm 1 paying 1 and arm 0 paying 0.
double bandit_arm_probability(int updates, double learning_rate, double clip_ratio,
                              std::uint64_t seed);

}  // namespace astfocus::testing

#endif  // ASTFOCUS_TESTS_SUPPORT_HPP_
