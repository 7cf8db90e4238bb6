#include <sstream>

#include "astfocus/attack.hpp"
#include "astfocus/synthetic.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace astfocus;
using astfocus::testing::error_code;

namespace {

SuiteSpec small_suite() {
  SuiteSpec s;
  s.videos = 4;
  s.frames = 6;
  s.height = 16;
  s.width = 16;
  s.object_size = 6;
  s.seed = 3;
  return s;
}

AttackConfig small_config(Variant v) {
  AttackConfig c = toy_attack_config();
  c.variant = v;
  c.patch_height = 8;
  c.patch_width = 8;
  c.stride = 4;
  c.frame_bound = 3;
  c.hidden = 16;
  c.patch_embed = 8;
  c.critic_hidden = 16;
  c.samples = 20;
  c.max_iters = 6;
  return c;
}

void check_projection(const AttackResult& r, const Video& original, double eps) {
  const Volume d = r.adversarial - original;
  CHECK(d.max_abs() <= eps + 1e-12);
  for (double x : r.adversarial.data()) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
  CHECK(support_contained(r, original));
}

}  // namespace

TEST_SUITE("attack") {

TEST_CASE("misclassified clean video succeeds on the first query") {
  ConstantOracle oracle({6, 16, 16}, {0.3, 0.7});
  const Video v = astfocus::testing::ramp_video({6, 16, 16});
  Rng rng(0);
  const AttackResult r = run_attack(v, 0, oracle, small_config(Variant::kFull), rng);
  CHECK(r.success);
  CHECK(r.queries_used == 1);
  CHECK(r.map == 0.0);
  CHECK(r.iterations == 0);
}

TEST_CASE("unbeatable oracle exhausts the budget") {
  ConstantOracle oracle({6, 16, 16}, {0.9, 0.1});
  const Video v = astfocus::testing::ramp_video({6, 16, 16});
  AttackConfig cfg = small_config(Variant::kFull);
  cfg.max_queries = 100;
  cfg.max_iters = 500;
  Rng rng(0);
  const AttackResult r = run_attack(v, 0, oracle, cfg, rng);
  CHECK_FALSE(r.success);
  CHECK(r.queries_used == 100);
  CHECK(oracle.queries() == 100);
}

TEST_CASE("queries follow one per step plus n per estimate") {
  ConstantOracle oracle({6, 16, 16}, {0.9, 0.1});
  const Video v = astfocus::testing::ramp_video({6, 16, 16});
  for (Variant variant : {Variant::kFull, Variant::kDense, Variant::kRandomAgents,
                          Variant::kSpatialOnly, Variant::kTemporalOnly}) {
    const AttackConfig cfg = small_config(variant);
    Rng rng(1);
    const AttackResult r = run_attack(v, 0, oracle, cfg, rng);
    CHECK(r.iterations == cfg.max_iters);
    CHECK(r.queries_used == 1 + static_cast<std::uint64_t>(r.iterations) * (cfg.samples + 1));
    CHECK(r.logs.size() == static_cast<std::size_t>(cfg.max_iters));
  }
}

TEST_CASE("dense variant perturbs the whole video") {
  const ToySuite suite = make_toy_suite(small_suite());
  TemplateOracle oracle = suite.oracle();
  const auto& item = suite.items[0];
  Rng rng(2);
  const AttackResult r = run_variant(Variant::kDense, item.video, item.label, oracle,
                                     small_config(Variant::kFull), rng);
  for (auto b : r.support) CHECK(b == 1);
  check_projection(r, item.video, small_config(Variant::kDense).eps_bound);
}

TEST_CASE("every variant stays inside the ball, the range and its masks") {
  const ToySuite suite = make_toy_suite(small_suite());
  TemplateOracle oracle = suite.oracle();
  for (Variant variant : {Variant::kFull, Variant::kRandomAgents, Variant::kSpatialOnly,
                          Variant::kTemporalOnly}) {
    for (std::size_t i = 0; i < suite.items.size(); ++i) {
      Rng rng(derive_seed(5, i));
      const AttackConfig cfg = small_config(variant);
      const AttackResult r = run_attack(suite.items[i].video, suite.items[i].label, oracle, cfg, rng);
      check_projection(r, suite.items[i].video, cfg.eps_bound);
    }
  }
}

TEST_CASE("spatial-only leaves every frame selected and temporal-only every pixel") {
  const ToySuite suite = make_toy_suite(small_suite());
  TemplateOracle oracle = suite.oracle();
  const auto& item = suite.items[1];
  Rng a(3);
  const AttackResult sp = run_variant(Variant::kSpatialOnly, item.video, item.label, oracle,
                                      small_config(Variant::kFull), a);
  for (const auto& log : sp.logs) {
    for (auto bit : log.frames) CHECK(bit == 1);
  }
  Rng b(3);
  const AttackResult tp = run_variant(Variant::kTemporalOnly, item.video, item.label, oracle,
                                      small_config(Variant::kFull), b);
  for (const auto& log : tp.logs) {
    for (int p : log.patches) CHECK(p == -1);
  }
}

TEST_CASE("same seed gives the same result") {
  const ToySuite suite = make_toy_suite(small_suite());
  TemplateOracle oracle = suite.oracle();
  const auto& item = suite.items[2];
  Rng a(11);
  Rng b(11);
  const AttackResult r1 = run_attack(item.video, item.label, oracle, small_config(Variant::kFull), a);
  const AttackResult r2 = run_attack(item.video, item.label, oracle, small_config(Variant::kFull), b);
  CHECK(result_json(r1, false).dump() == result_json(r2, false).dump());
  CHECK(r1.adversarial.values().data().size() == r2.adversarial.values().data().size());
  for (std::size_t i = 0; i < r1.adversarial.size(); ++i) CHECK(r1.adversarial[i] == r2.adversarial[i]);
}

TEST_CASE("targeted attack stops when the target is on top") {
  ConstantOracle oracle({6, 16, 16}, {0.2, 0.1, 0.7});
  const Video v = astfocus::testing::ramp_video({6, 16, 16});
  AttackConfig cfg = small_config(Variant::kFull);
  cfg.mode = AttackMode::kTargeted;
  cfg.target_label = 2;
  Rng rng(0);
  const AttackResult r = run_attack(v, 0, oracle, cfg, rng);
  CHECK(r.success);
  CHECK(r.final_label == 2);

  cfg.target_label = 1;
  cfg.max_iters = 2;
  Rng rng2(0);
  CHECK_FALSE(run_attack(v, 0, oracle, cfg, rng2).success);
  CHECK(cfg.budget() == kTargetedBudget);
  CHECK(cfg.nes_delta() == 1e-6);
}

TEST_CASE("aggregates count failures at the budget") {
  std::vector<BenchRow> rows = {{0, 0, true, 1000, 4.0}, {1, 0, true, 2000, 2.0},
                                {2, 0, true, 3000, 6.0}, {3, 0, false, 15000, 8.0}};
  const BenchReport r = summarize(Variant::kFull, rows, 15000);
  CHECK(r.fooling_rate == 75.0);
  CHECK(r.mean_queries == doctest::Approx((1000 + 2000 + 3000 + 15000) / 4.0));
  CHECK(r.mean_map == 5.0);

  std::vector<BenchRow> failed = {{0, 0, false, 100, 1.0}, {1, 0, false, 15000, 1.0}};
  CHECK(summarize(Variant::kDense, failed, 15000).mean_queries == 15000.0);
  CHECK(summarize(Variant::kDense, failed, 15000).fooling_rate == 0.0);

  std::vector<BenchRow> instant = {{0, 0, true, 1, 0.0}, {1, 1, true, 1, 0.0}};
  CHECK(summarize(Variant::kFull, instant, 15000).mean_map == 0.0);
}

TEST_CASE("parallel bench matches the serial one") {
  const ToySuite suite = make_toy_suite(small_suite());
  TemplateOracle oracle = suite.oracle();
  AttackConfig cfg = small_config(Variant::kFull);
  cfg.max_iters = 3;
  const BenchReport serial = run_bench(suite.items, oracle, cfg, 1);
  const BenchReport parallel = run_bench(suite.items, oracle, cfg, 3);
  const BenchReport reports[] = {serial};
  const BenchReport others[] = {parallel};
  CHECK(report_json(reports, false).dump() == report_json(others, false).dump());
}

TEST_CASE("derived seeds differ per video") {
  CHECK(derive_seed(0, 0) != derive_seed(0, 1));
  CHECK(derive_seed(0, 0) != derive_seed(1, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("config round trip and validation") {
  AttackConfig cfg = small_config(Variant::kRandomAgents);
  cfg.mode = AttackMode::kTargeted;
  cfg.target_label = 2;
  const AttackConfig back = config_from_json(config_json(cfg));
  CHECK(config_json(back).dump() == config_json(cfg).dump());

  CHECK(error_code([] { config_from_json({{"alpha_typo", 1.0}}); }) == ErrorCode::kConfigError);
  CHECK(error_code([] { config_from_json({{"samples", "many"}}); }) == ErrorCode::kConfigError);

  AttackConfig odd = cfg;
  odd.samples = 7;
  CHECK(error_code([&] { odd.validate(); }) == ErrorCode::kConfigError);
  AttackConfig untargeted_target = toy_attack_config();
  untargeted_target.mode = AttackMode::kTargeted;
  CHECK(error_code([&] { untargeted_target.validate(); }) == ErrorCode::kConfigError);
}

TEST_CASE("iteration csv has one row per logged iteration") {
  ConstantOracle oracle({6, 16, 16}, {0.9, 0.1});
  const Video v = astfocus::testing::ramp_video({6, 16, 16});
  Rng rng(0);
  const AttackResult r = run_attack(v, 0, oracle, small_config(Variant::kFull), rng);
  std::ostringstream out;
  write_iterations_csv(out, r.logs);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == kIterationHeader);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == static_cast<int>(r.logs.size()));
}

}  // TEST_SUITE
