#include "astfocus/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "astfocus/error.hpp"

namespace astfocus {

namespace {

[[noreturn]] void config_error(const std::string& what) {
  throw Error(ErrorCode::kConfigError, what);
}

int as_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) config_error("key '" + key + "' must be an integer");
  return v.get<int>();
}

double as_double(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) config_error("key '" + key + "' must be a number");
  return v.get<double>();
}

std::string as_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) config_error("key '" + key + "' must be a string");
  return v.get<std::string>();
}

const char* const kRunKeys[] = {"attack", "oracle", "video",    "label",    "suite_index",
                                "suite",  "output", "variants", "jobs"};

bool is_run_key(std::string_view key) {
  for (const char* k : kRunKeys) {
    if (key == k) return true;
  }
  return false;
}

}  // namespace

void RunConfig::validate() const {
  attack.validate();
  if (oracle != "builtin:template" && oracle != "builtin:linear" && !remote()) {
    config_error("oracle must be builtin:template, builtin:linear or remote:<url>");
  }
  if (remote() && remote_url().empty()) config_error("remote oracle needs a url");
  if (video.empty()) {
    if (suite_index < 0 || suite_index >= suite.videos) {
      config_error("suite_index " + std::to_string(suite_index) + " outside the suite");
    }
  } else if (label < 0) {
    config_error("an input video needs a label");
  }
  if (variants.empty()) config_error("variants must not be empty");
  if (jobs < 1) config_error("jobs must be >= 1");
  if (output.empty()) config_error("output must not be empty");
  if (suite.videos < 1 || suite.classes < 2 || suite.frames < 1 || suite.object_size < 1 ||
      suite.object_size > std::min(suite.height, suite.width) || suite.signal_min < 0.0 ||
      suite.signal_min > suite.signal_max || suite.texture < 0.0 || suite.noise < 0.0 ||
      !(suite.beta >= 0.0)) {
    config_error("invalid suite spec");
  }
}

nlohmann::json suite_json(const SuiteSpec& s) {
  return {{"videos", s.videos},         {"classes", s.classes},
          {"frames", s.frames},         {"height", s.height},
          {"width", s.width},           {"object_size", s.object_size},
          {"speed", s.speed},           {"texture", s.texture},
          {"signal_min", s.signal_min}, {"signal_max", s.signal_max},
          {"noise", s.noise},           {"beta", s.beta},
          {"seed", s.seed}};
}

SuiteSpec suite_from_json(const nlohmann::json& j, SuiteSpec s) {
  if (!j.is_object()) config_error("suite must be an object");
  for (const auto& [key, v] : j.items()) {
    const std::string k = "suite." + key;
    if (key == "videos") s.videos = as_int(v, k);
    else if (key == "classes") s.classes = as_int(v, k);
    else if (key == "frames") s.frames = as_int(v, k);
    else if (key == "height") s.height = as_int(v, k);
    else if (key == "width") s.width = as_int(v, k);
    else if (key == "object_size") s.object_size = as_int(v, k);
    else if (key == "speed") s.speed = as_double(v, k);
    else if (key == "texture") s.texture = as_double(v, k);
    else if (key == "signal_min") s.signal_min = as_double(v, k);
    else if (key == "signal_max") s.signal_max = as_double(v, k);
    else if (key == "noise") s.noise = as_double(v, k);
    else if (key == "beta") s.beta = as_double(v, k);
    else if (key == "seed") {
      if (!v.is_number_unsigned()) config_error("key '" + k + "' must be a non-negative integer");
      s.seed = v.get<std::uint64_t>();
    } else {
      config_error("unknown key '" + k + "'");
    }
  }
  return s;
}

nlohmann::json run_config_json(const RunConfig& rc) {
  nlohmann::json variants = nlohmann::json::array();
  for (Variant v : rc.variants) variants.push_back(to_string(v));
  return {{"attack", config_json(rc.attack)},
          {"oracle", rc.oracle},
          {"video", rc.video},
          {"label", rc.label},
          {"suite_index", rc.suite_index},
          {"suite", suite_json(rc.suite)},
          {"output", rc.output},
          {"variants", variants},
          {"jobs", rc.jobs}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) config_error("config must be a JSON object");
  RunConfig rc;
  for (const auto& [key, v] : j.items()) {
    if (key == "attack") {
      try {
        rc.attack = config_from_json(v, rc.attack);
      } catch (const Error& e) {
        std::string what = e.what();
        const std::string prefix = std::string(to_string(ErrorCode::kConfigError)) + ": ";
        if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
        config_error("attack: " + what);
      }
    } else if (key == "oracle") rc.oracle = as_string(v, key);
    else if (key == "video") rc.video = as_string(v, key);
    else if (key == "label") rc.label = as_int(v, key);
    else if (key == "suite_index") rc.suite_index = as_int(v, key);
    else if (key == "suite") rc.suite = suite_from_json(v, rc.suite);
    else if (key == "output") rc.output = as_string(v, key);
    else if (key == "jobs") rc.jobs = as_int(v, key);
    else if (key == "variants") {
      if (!v.is_array()) config_error("key 'variants' must be an array");
      rc.variants.clear();
      for (const auto& item : v) {
        const auto parsed = parse_variant(as_string(item, "variants"));
        if (!parsed) config_error("unknown variant '" + item.get<std::string>() + "'");
        rc.variants.push_back(*parsed);
      }
    } else {
      config_error("unknown key '" + key + "'");
    }
  }
  return rc;
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    config_error(path + ": " + e.what());
  }
}

void apply_overrides(nlohmann::json& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) config_error("override '" + item + "' is not key=value");
    std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    if (key.find('.') == std::string::npos && !is_run_key(key)) key = "attack." + key;

    nlohmann::json value;
    try {
      value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
      value = text;
    }

    nlohmann::json* node = &config;
    std::stringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) path.push_back(part);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->is_object()) config_error("override '" + key + "' walks through a non-object");
      node = &(*node)[path[i]];
      if (node->is_null()) *node = nlohmann::json::object();
    }
    (*node)[path.back()] = std::move(value);
  }
}

}  // namespace astfocus
