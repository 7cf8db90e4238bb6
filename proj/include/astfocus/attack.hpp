#ifndef ASTFOCUS_ATTACK_HPP_
#define ASTFOCUS_ATTACK_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "astfocus/estimator.hpp"
#include "astfocus/oracle.hpp"
#include "astfocus/rewards.hpp"
#include "astfocus/tensor.hpp"
#include "astfocus/trainer.hpp"

namespace astfocus {

enum class AttackMode { kUntargeted, kTargeted };

enum class Variant { kFull, kDense, kSpatialOnly, kTemporalOnly, kRandomAgents };

std::string_view to_string(AttackMode mode);
std::string_view to_string(Variant variant);
std::optional<AttackMode> parse_mode(std::string_view text);
std::optional<Variant> parse_variant(std::string_view text);

inline constexpr std::uint64_t kUntargetedBudget = 15000;
inline constexpr std::uint64_t kTargetedBudget = 30000;

struct AttackConfig {
  AttackMode mode = AttackMode::kUntargeted;
  int target_label = -1;
  Variant variant = Variant::kFull;

  double alpha = 2.0 / 255.0;
  double eps_bound = 16.0 / 255.0;
  int max_iters = 500;
  std::uint64_t max_queries = 0;  // 0: budget of the mode

  int samples = 60;
  double delta = 0.0;  // 0: 1e-3 untargeted, 1e-6 targeted

  int patch_height = 65;
  int patch_width = 65;
  int stride = 0;  // 0: default_stride per axis
  int feature_cells = 4;
  int frame_bound = 10;  // L
  double edge_threshold = kDefaultEdgeThreshold;
  RewardWeights weights;

  int hidden = 64;
  int patch_embed = 16;
  int critic_hidden = 64;
  PPOConfig ppo;
  // Standardize each agent's reward by the running mean and standard
  // deviation of that agent's rewards in the current attack before training.
  bool reward_scaling = true;

  std::uint64_t seed = 0;

  std::uint64_t budget() const;
  double nes_delta() const;
  EstimatorConfig estimator() const;
  // Throws kConfigError on any inconsistent field.
  void validate() const;
};

struct IterationLog {
  int t = 0;
  std::uint64_t queries = 0;
  double value = 0.0;
  RewardBundle rewards;
  std::vector<std::uint8_t> frames;  // selected-frame bits
  std::vector<int> patches;          // patch per frame, -1 where not chosen by the grid
};

struct AttackResult {
  bool success = false;
  std::uint64_t queries_used = 0;
  double map = 0.0;
  double wall_seconds = 0.0;
  int final_label = -1;
  int iterations = 0;
  Video adversarial;
  std::vector<IterationLog> logs;
  // Union of the masks of every iteration, M x H x W.
  std::vector<std::uint8_t> support;
};

// Focused PGD attack driven by the agents of cfg.variant. Budget exhaustion
// ends the run with success=false; other oracle errors propagate.
AttackResult run_attack(const Video& video, int true_label, Oracle& oracle,
                        const AttackConfig& cfg, Rng& rng);

AttackResult run_variant(Variant variant, const Video& video, int true_label,
                         Oracle& oracle, AttackConfig cfg, Rng& rng);

// True when (adversarial - original) is zero off the recorded support.
bool support_contained(const AttackResult& result, const Video& original);

struct BenchRow {
  int index = 0;
  int label = 0;
  bool success = false;
  std::uint64_t queries_used = 0;
  double map = 0.0;
  double wall_seconds = 0.0;
  int final_label = -1;
  int iterations = 0;
};

struct BenchReport {
  Variant variant = Variant::kFull;
  double fooling_rate = 0.0;  // percent
  double mean_queries = 0.0;
  double mean_map = 0.0;
  double mean_seconds = 0.0;
  std::vector<BenchRow> rows;
};

// Aggregates over every row; a failed row counts as `budget` queries.
BenchReport summarize(Variant variant, std::vector<BenchRow> rows, std::uint64_t budget);

struct BenchItem {
  Video video;
  int label = 0;
};

// Per-video seed derived from the base seed and the video's position.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// One run_attack per item with seed derive_seed(cfg.seed, i), `jobs` at a
// time. The oracle must tolerate concurrent queries.
BenchReport run_bench(std::span<const BenchItem> items, Oracle& oracle,
                      const AttackConfig& cfg, int jobs = 1);

nlohmann::json config_json(const AttackConfig& cfg);
// Rejects unknown keys and mistyped values with kConfigError.
AttackConfig config_from_json(const nlohmann::json& j, AttackConfig base = {});

nlohmann::json result_json(const AttackResult& result, bool timing);
nlohmann::json report_json(std::span<const BenchReport> reports, bool timing);

inline constexpr std::string_view kIterationHeader =
    "t,queries,V,r_common,r_edgebox,r_sparse,r_rep,frames_bits,patch_indices";
void write_iterations_csv(std::ostream& out, std::span<const IterationLog> logs);
void write_report_csv(std::ostream& out, std::span<const BenchReport> reports, bool timing);

}  // namespace astfocus

#endif  // ASTFOCUS_ATTACK_HPP_
