#pragma once

#include <string>
#include <utility>
#include <vector>

#include "obsbias/config.hpp"
#include "obsbias/dataset.hpp"
#include "obsbias/error.hpp"

namespace obsbias {

/// Column renames applied after ingestion plus a ready-made analysis
/// config. Ingestion itself stays generic; presets are plain data.
struct DatasetPreset {
  std::string name;
  std::vector<std::pair<std::string, std::string>> renames;  // from -> to
  AnalysisConfig config;
};

inline void apply_renames(
    Dataset& data,
    const std::vector<std::pair<std::string, std::string>>& renames) {
  for (const auto& [from, to] : renames) {
    if (!data.has_column(from)) {
      throw schema_error("preset: expected column '" + from +
                         "' not found in dataset");
    }
    if (data.has_column(to)) {
      throw schema_error("preset: rename target '" + to +
                         "' already exists in dataset");
    }
    data.names[data.column_index(from)] = to;
  }
}

/// Right Heart Catheterization study recodings: the RHC arm indicator
/// becomes `exposure`, 30-day follow-up time becomes `time`, 30-day
/// death becomes `event`, and single-indicator categoricals fold back to
/// their source names so drop labels read naturally. The analysis uses
/// the 20-covariate demonstration set with its four drop groups.
inline DatasetPreset rhc_preset() {
  DatasetPreset preset;
  preset.name = "rhc";
  preset.renames = {
      {"swang1=RHC", "exposure"}, {"t3d30", "time"}, {"dth30=Yes", "event"},
      {"dnr1=Yes", "dnr1"},       {"neuro=Yes", "neuro"},
      {"hema=Yes", "hema"},       {"sex=Male", "sex"},
  };
  AnalysisConfig cfg;
  cfg.exposure = "exposure";
  cfg.time = "time";
  cfg.event = "event";
  cfg.covariates = {"renalhx", "gibledhx", "transhx", "aps1",  "wblc1",
                    "hrt1",    "pafi1",    "alb1",    "hema1", "bili1",
                    "meanbp1", "paco21",   "dnr1",    "ph1",   "resp1",
                    "neuro",   "hema",     "sex",     "age",   "surv2md1"};
  const std::vector<std::string> physio = {"hrt1",  "wblc1",  "pafi1",
                                           "alb1",  "hema1",  "bili1",
                                           "paco21", "meanbp1", "resp1",
                                           "ph1"};
  std::vector<std::string> physio_apache = physio;
  physio_apache.push_back("aps1");
  physio_apache.push_back("surv2md1");
  cfg.groups = {
      {"All Covariates", cfg.covariates},
      {"APACHE and Support prob.", {"aps1", "surv2md1"}},
      {"All Physiological Measurements", physio},
      {"Physiological Measurements, APACHE, and Support prob.",
       physio_apache},
  };
  cfg.outcome_common = true;  // 30-day mortality runs around a third
  cfg.ci_level = 0.95;
  preset.config = cfg;
  return preset;
}

inline DatasetPreset find_preset(const std::string& name) {
  if (name == "rhc") return rhc_preset();
  throw schema_error("unknown preset '" + name + "' (available: rhc)");
}

}  // namespace obsbias
