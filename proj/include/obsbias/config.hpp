#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "obsbias/error.hpp"

namespace obsbias {

/// What to analyze: model columns, drop groups, scale context.
struct AnalysisConfig {
  std::string exposure;
  std::string time;
  std::string event;
  std::vector<std::string> covariates;
  // Ordered: group drops are reported in declaration order.
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  bool outcome_common = false;
  double ci_level = 0.95;

  void validate() const {
    if (exposure.empty() || time.empty() || event.empty()) {
      throw schema_error("config: exposure, time, and event are required");
    }
    if (exposure == time || exposure == event || time == event) {
      throw schema_error("config: exposure, time, and event must be "
                         "distinct columns");
    }
    std::set<std::string> cov_set;
    for (const auto& c : covariates) {
      if (!cov_set.insert(c).second) {
        throw schema_error("config: duplicate covariate '" + c + "'");
      }
      if (c == exposure || c == time || c == event) {
        throw schema_error("config: covariate '" + c +
                           "' collides with exposure/time/event");
      }
    }
    std::set<std::string> group_names;
    for (const auto& [name, members] : groups) {
      if (!group_names.insert(name).second) {
        throw schema_error("config: duplicate group '" + name + "'");
      }
      if (cov_set.count(name) != 0) {
        throw schema_error("config: group name '" + name +
                           "' collides with a covariate");
      }
      std::set<std::string> member_set;
      for (const auto& m : members) {
        if (cov_set.count(m) == 0) {
          throw schema_error("config: group '" + name +
                             "' references unknown covariate '" + m + "'");
        }
        if (!member_set.insert(m).second) {
          throw schema_error("config: group '" + name +
                             "' lists covariate '" + m + "' twice");
        }
      }
    }
    if (!(ci_level > 0.0 && ci_level < 1.0)) {
      throw schema_error("config: ci_level must lie strictly in (0, 1)");
    }
  }
};

/// Parse an analysis config from JSON text. Keys: exposure, time, event,
/// covariates, outcome_common (required); groups, ci_level (optional).
/// Unknown keys are rejected.
inline AnalysisConfig parse_config(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) {
    throw schema_error("config: top level must be a JSON object");
  }
  static const std::set<std::string> allowed = {
      "exposure", "time",           "event",   "covariates",
      "groups",   "outcome_common", "ci_level"};
  for (const auto& [key, value] : doc.items()) {
    if (allowed.count(key) == 0) {
      throw schema_error("config: unknown key '" + key + "'");
    }
  }
  const auto require = [&](const char* key) -> const nlohmann::ordered_json& {
    if (!doc.contains(key)) {
      throw schema_error(std::string("config: missing key '") + key + "'");
    }
    return doc.at(key);
  };
  const auto as_string = [](const nlohmann::ordered_json& v,
                            const std::string& key) {
    if (!v.is_string()) {
      throw schema_error("config: '" + key + "' must be a string");
    }
    return v.get<std::string>();
  };

  AnalysisConfig cfg;
  cfg.exposure = as_string(require("exposure"), "exposure");
  cfg.time = as_string(require("time"), "time");
  cfg.event = as_string(require("event"), "event");
  {
    const auto& arr = require("covariates");
    if (!arr.is_array()) {
      throw schema_error("config: 'covariates' must be an array");
    }
    for (const auto& v : arr) {
      cfg.covariates.push_back(as_string(v, "covariates"));
    }
  }
  {
    const auto& v = require("outcome_common");
    if (!v.is_boolean()) {
      throw schema_error("config: 'outcome_common' must be a boolean");
    }
    cfg.outcome_common = v.get<bool>();
  }
  if (doc.contains("groups")) {
    const auto& g = doc.at("groups");
    if (!g.is_object()) {
      throw schema_error("config: 'groups' must be an object of arrays");
    }
    for (const auto& [name, members] : g.items()) {
      if (!members.is_array()) {
        throw schema_error("config: group '" + name +
                           "' must be an array of covariate names");
      }
      std::vector<std::string> list;
      for (const auto& m : members) {
        list.push_back(as_string(m, "groups." + name));
      }
      cfg.groups.emplace_back(name, std::move(list));
    }
  }
  if (doc.contains("ci_level")) {
    const auto& v = doc.at("ci_level");
    if (!v.is_number()) {
      throw schema_error("config: 'ci_level' must be a number");
    }
    cfg.ci_level = v.get<double>();
  }
  cfg.validate();
  return cfg;
}

inline AnalysisConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const parse_error& e) {
    throw parse_error(path.string() + ": " + e.what());
  } catch (const schema_error& e) {
    throw schema_error(path.string() + ": " + e.what());
  }
}

}  // namespace obsbias
