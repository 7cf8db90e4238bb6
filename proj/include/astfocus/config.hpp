#ifndef ASTFOCUS_CONFIG_HPP_
#define ASTFOCUS_CONFIG_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "astfocus/attack.hpp"
#include "astfocus/synthetic.hpp"
#include "json.hpp"

namespace astfocus {

// Everything one CLI invocation needs. Serialises to the same JSON it is read
// from, so a manifest's "config" block can be fed back as a config file.
struct RunConfig {
  AttackConfig attack = toy_attack_config();
  std::string oracle = "builtin:template";  // builtin:template | builtin:linear | remote:<url>
  std::string video;                        // astv1 path; empty selects a suite clip
  int label = -1;
  int suite_index = 0;
  SuiteSpec suite;
  std::string output = "run";
  std::vector<Variant> variants = {Variant::kFull};
  int jobs = 1;

  bool remote() const { return oracle.rfind("remote:", 0) == 0; }
  std::string remote_url() const { return oracle.substr(7); }
  // Throws kConfigError naming the offending key.
  void validate() const;
};

nlohmann::json suite_json(const SuiteSpec& s);
SuiteSpec suite_from_json(const nlohmann::json& j, SuiteSpec base = {});

nlohmann::json run_config_json(const RunConfig& rc);
// Unknown keys anywhere are rejected with kConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
// Parse errors carry the line and column reported by the JSON reader.
nlohmann::json read_config_file(const std::string& path);

// Applies "key=value" overrides. Keys are dotted paths into the config JSON
// ("suite.videos"); a bare key that is not a run-level key addresses the
// attack block ("alpha" means "attack.alpha"). Values parse as JSON when
// possible and as strings otherwise.
void apply_overrides(nlohmann::json& config, const std::vector<std::string>& overrides);

}  // namespace astfocus

#endif  // ASTFOCUS_CONFIG_HPP_
