// astfocus command-line driver: attack, bench, check-estimator, info.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>

#include "CLI11.hpp"
#include "astfocus/attack.hpp"
#include "astfocus/config.hpp"
#include "astfocus/error.hpp"
#include "astfocus/estimator.hpp"
#include "astfocus/synthetic.hpp"

namespace fs = std::filesystem;
using namespace astfocus;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kAttackFailed = 3, kUnreachable = 4 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kFormatError:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kPatchLargerThanFrame:
    case ErrorCode::kInvalidBound:
    case ErrorCode::kOddSampleCount:
    case ErrorCode::kInvalidArgument:
      return kConfig;
    case ErrorCode::kRemoteUnavailable:
      return kUnreachable;
    default:
      return kInternal;
  }
}

// Splits leftover "--key=value" arguments into overrides.
std::vector<std::string> overrides_from(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (const auto& e : extras) {
    if (e.rfind("--", 0) != 0 || e.find('=') == std::string::npos) {
      throw Error(ErrorCode::kConfigError, "unexpected argument '" + e + "' (overrides are --key=value)");
    }
    out.push_back(e.substr(2));
  }
  return out;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& extras) {
  nlohmann::json j = path.empty() ? nlohmann::json::object() : read_config_file(path);
  if (const char* url = std::getenv("ASTFOCUS_ORACLE_URL"); url && *url && !j.contains("oracle")) {
    j["oracle"] = std::string("remote:") + url;
  }
  apply_overrides(j, overrides_from(extras));
  RunConfig rc = run_config_from_json(j);
  rc.validate();
  return rc;
}

std::unique_ptr<Oracle> make_oracle(const RunConfig& rc, const ToySuite& suite) {
  if (rc.remote()) return std::make_unique<RemoteOracle>(rc.remote_url());
  if (rc.oracle == "builtin:linear") {
    const VideoShape shape{rc.suite.frames, rc.suite.height, rc.suite.width};
    Rng rng(rc.suite.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Volume w(shape);
    const double scale = 8.0 / static_cast<double>(shape.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * normal(rng);
    return std::make_unique<LinearOracle>(std::move(w), Video::filled(shape, 0.5));
  }
  return std::make_unique<TemplateOracle>(suite.templates, rc.suite.beta);
}

// Shape checks that need no oracle contact.
void check_geometry(const RunConfig& rc, const VideoShape& shape) {
  const AttackConfig& a = rc.attack;
  for (Variant v : rc.variants) {
    const bool spatial = v == Variant::kFull || v == Variant::kSpatialOnly || v == Variant::kRandomAgents;
    const bool temporal = v == Variant::kFull || v == Variant::kTemporalOnly || v == Variant::kRandomAgents;
    if (spatial && (a.patch_height > shape.height || a.patch_width > shape.width)) {
      throw Error(ErrorCode::kConfigError, "patch " + std::to_string(a.patch_height) + "x" +
                                               std::to_string(a.patch_width) + " larger than frame");
    }
    if (temporal && a.frame_bound >= shape.frames) {
      throw Error(ErrorCode::kConfigError, "frame_bound must be < frames");
    }
  }
  if (!rc.remote()) {
    const VideoShape expected{rc.suite.frames, rc.suite.height, rc.suite.width};
    if (shape != expected) throw Error(ErrorCode::kConfigError, "input video shape differs from the builtin oracle");
  }
}

void check_remote_shape(Oracle& oracle, const VideoShape& shape) {
  const auto info = oracle.info();
  if (info.shape != shape) throw Error(ErrorCode::kShapeMismatch, "oracle expects another video shape");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_attack(const std::string& config_path, const std::vector<std::string>& extras, bool timing) {
  const RunConfig rc = load_config(config_path, extras);
  if (rc.variants.size() != 1) throw Error(ErrorCode::kConfigError, "attack runs exactly one variant");
  const ToySuite suite = make_toy_suite(rc.suite);
  BenchItem item = rc.video.empty() ? suite.items[static_cast<std::size_t>(rc.suite_index)]
                                    : BenchItem{read_video(rc.video), rc.label};
  check_geometry(rc, item.video.shape());

  auto oracle = make_oracle(rc, suite);
  if (rc.remote()) check_remote_shape(*oracle, item.video.shape());

  AttackConfig cfg = rc.attack;
  cfg.variant = rc.variants.front();
  Rng rng(cfg.seed);
  const AttackResult res = run_attack(item.video, item.label, *oracle, cfg, rng);

  const fs::path dir(rc.output);
  fs::create_directories(dir);
  nlohmann::json manifest = {{"config", run_config_json(rc)},
                             {"seed", cfg.seed},
                             {"oracle", {{"kind", rc.oracle}, {"info", protocol::info_json(oracle->info())}}},
                             {"label", item.label},
                             {"result", result_json(res, timing)}};
  write_json(dir / "manifest.json", manifest);
  {
    std::ofstream csv(dir / "iterations.csv");
    write_iterations_csv(csv, res.logs);
  }
  write_video((dir / "adv.astv").string(), res.adversarial);

  std::cout << (res.success ? "success" : "failed") << " queries=" << res.queries_used
            << " map=" << res.map << " label=" << res.final_label << '\n';
  return res.success ? kOk : kAttackFailed;
}

int cmd_bench(const std::string& config_path, const std::vector<std::string>& extras, bool timing,
              int jobs) {
  RunConfig rc = load_config(config_path, extras);
  if (jobs > 0) rc.jobs = jobs;
  const ToySuite suite = make_toy_suite(rc.suite);
  std::vector<BenchItem> items;
  if (rc.video.empty()) {
    items = suite.items;
  } else {
    items.push_back({read_video(rc.video), rc.label});
  }
  check_geometry(rc, items.front().video.shape());

  auto oracle = make_oracle(rc, suite);
  if (rc.remote()) check_remote_shape(*oracle, items.front().video.shape());

  std::vector<BenchReport> reports;
  for (Variant v : rc.variants) {
    AttackConfig cfg = rc.attack;
    cfg.variant = v;
    reports.push_back(run_bench(items, *oracle, cfg, rc.jobs));
    const auto& r = reports.back();
    std::cout << to_string(v) << " FR=" << r.fooling_rate << " QN=" << r.mean_queries
              << " MAP=" << r.mean_map << '\n';
  }

  const fs::path dir(rc.output);
  fs::create_directories(dir);
  write_json(dir / "report.json", {{"config", run_config_json(rc)}, {"reports", report_json(reports, timing)}});
  std::ofstream csv(dir / "report.csv");
  write_report_csv(csv, reports, timing);
  return kOk;
}

int cmd_check_estimator(int dims, int n, double delta, int trials, std::uint64_t seed, bool constant) {
  EstimatorConfig cfg;
  cfg.samples = n;
  cfg.delta = delta;
  if (n < 2 || n % 2 != 0) throw Error(ErrorCode::kConfigError, "n must be even and >= 2");
  if (dims < 1 || trials < 1) throw Error(ErrorCode::kConfigError, "dims and trials must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const FidelityReport rep = check_fidelity(dims, cfg, trials, seed, constant);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const nlohmann::json j = {{"dims", rep.dims},
                            {"n", n},
                            {"delta", delta},
                            {"trials", rep.trials},
                            {"oracle", constant ? "constant" : "linear"},
                            {"cosine", rep.cosine},
                            {"mean_trial_cosine", rep.mean_trial_cosine},
                            {"gradient_norm", rep.gradient_norm},
                            {"queries", rep.queries},
                            {"seconds", secs}};
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_info(const std::string& config_path, const std::vector<std::string>& extras) {
  const RunConfig rc = load_config(config_path, extras);
  const ToySuite suite = make_toy_suite(rc.suite);
  auto oracle = make_oracle(rc, suite);
  std::cout << protocol::info_json(oracle->info()).dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AstFocus black-box video attack"};
  app.require_subcommand(1);

  std::string config_path;
  bool no_timing = false;
  int jobs = 0;

  auto* attack = app.add_subcommand("attack", "attack one video; writes manifest.json, iterations.csv, adv.astv");
  attack->add_option("-c,--config", config_path, "JSON run config");
  attack->add_flag("--no-timing", no_timing, "omit wall-clock fields from the manifest");
  attack->allow_extras();

  auto* bench = app.add_subcommand("bench", "attack a suite per variant; writes report.json, report.csv");
  bench->add_option("-c,--config", config_path, "JSON run config");
  bench->add_flag("--no-timing", no_timing, "omit timing fields from the report");
  bench->add_option("--jobs", jobs, "parallel attacks")->check(CLI::PositiveNumber);
  bench->allow_extras();

  int dims = 128, n = 60, trials = 200;
  double delta = 1e-3;
  std::uint64_t seed = 0;
  bool constant = false;
  auto* check = app.add_subcommand("check-estimator", "NES cosine fidelity on the linear oracle");
  check->add_option("--dims", dims);
  check->add_option("--n", n);
  check->add_option("--delta", delta);
  check->add_option("--trials", trials);
  check->add_option("--seed", seed);
  check->add_flag("--constant", constant, "use a constant oracle instead");

  auto* info = app.add_subcommand("info", "print the oracle's /v1/info");
  info->add_option("-c,--config", config_path, "JSON run config");
  info->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*attack) return cmd_attack(config_path, attack->remaining(), !no_timing);
    if (*bench) return cmd_bench(config_path, bench->remaining(), !no_timing, jobs);
    if (*check) return cmd_check_estimator(dims, n, delta, trials, seed, constant);
    if (*info) return cmd_info(config_path, info->remaining());
  } catch (const Error& e) {
    std::cerr << "astfocus: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "astfocus: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}
