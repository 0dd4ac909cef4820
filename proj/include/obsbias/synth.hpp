#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "obsbias/dataset.hpp"
#include "obsbias/error.hpp"
#include "obsbias/stats.hpp"

namespace obsbias {

struct ConfounderSpec {
  std::string name;
  double effect_on_exposure = 0.0;  // log-odds per unit
  double effect_on_hazard = 0.0;    // log-hazard per unit
};

struct SynthSpec {
  int n = 0;
  std::uint64_t seed = 0;
  std::vector<ConfounderSpec> confounders;
  int null_covariates = 0;  // named null_1 .. null_k, no effects
  double baseline_hazard = 0.1;
  double exposure_loghr = 0.0;
  double censor_time = 10.0;

  void validate() const {
    if (n < 10) {
      throw domain_error("synth spec: n must be at least 10");
    }
    if (null_covariates < 0) {
      throw domain_error("synth spec: null_covariates must be >= 0");
    }
    if (!(baseline_hazard > 0.0)) {
      throw domain_error("synth spec: baseline_hazard must be positive");
    }
    if (!(censor_time > 0.0)) {
      throw domain_error("synth spec: censor_time must be positive");
    }
    std::set<std::string> names;
    for (const auto& c : confounders) {
      if (c.name.empty() || !names.insert(c.name).second) {
        throw domain_error("synth spec: confounder names must be unique "
                           "and nonempty");
      }
    }
    for (int k = 1; k <= null_covariates; ++k) {
      if (names.count("null_" + std::to_string(k)) != 0) {
        throw domain_error("synth spec: confounder name collides with "
                           "null covariate null_" + std::to_string(k));
      }
    }
  }
};

namespace detail {

/// Deterministic draw recipe, stable across platforms:
///   generator  std::mt19937_64 seeded with the spec seed (the stream is
///              fixed by the C++ standard)
///   uniform    u = ((x >> 11) + 0.5) * 2^-53, strictly inside (0, 1)
///   normal     inverse-CDF via normal_quantile(u)
///   exponential(rate)  -log(u) / rate
struct SynthRng {
  std::mt19937_64 gen;
  explicit SynthRng(std::uint64_t seed) : gen(seed) {}

  double uniform() {
    const std::uint64_t x = gen();
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }
  double normal() { return normal_quantile(uniform()); }
  double exponential(double rate) { return -std::log(uniform()) / rate; }
};

}  // namespace detail

/// Generate an observational dataset: standard-normal covariates, a
/// logistic exposure model, exponential event times on the log-hazard
/// scale, administrative censoring. Per row the draws are: covariates in
/// spec order (confounders then null covariates), then the exposure
/// uniform, then the event-time uniform.
inline Dataset generate(const SynthSpec& spec) {
  spec.validate();
  detail::SynthRng rng(spec.seed);

  const std::size_t n = static_cast<std::size_t>(spec.n);
  const std::size_t kc = spec.confounders.size();
  const std::size_t kn = static_cast<std::size_t>(spec.null_covariates);

  Dataset out;
  out.names = {"exposure", "time", "event"};
  for (const auto& c : spec.confounders) out.names.push_back(c.name);
  for (std::size_t k = 1; k <= kn; ++k) {
    out.names.push_back("null_" + std::to_string(k));
  }
  out.columns.assign(out.names.size(), std::vector<double>(n));

  for (std::size_t i = 0; i < n; ++i) {
    double exposure_logit = 0.0;
    double hazard_log = std::log(spec.baseline_hazard);
    for (std::size_t j = 0; j < kc + kn; ++j) {
      const double x = rng.normal();
      out.columns[3 + j][i] = x;
      if (j < kc) {
        exposure_logit += spec.confounders[j].effect_on_exposure * x;
        hazard_log += spec.confounders[j].effect_on_hazard * x;
      }
    }
    const double z =
        rng.uniform() < inverse_logit(exposure_logit) ? 1.0 : 0.0;
    hazard_log += spec.exposure_loghr * z;
    const double t = rng.exponential(std::exp(hazard_log));
    out.columns[0][i] = z;
    out.columns[1][i] = std::min(t, spec.censor_time);
    out.columns[2][i] = t <= spec.censor_time ? 1.0 : 0.0;
  }
  return out;
}

/// Parse a SynthSpec from JSON. Keys: n, seed (required); confounders
/// (array of {name, effect_on_exposure, effect_on_hazard}),
/// null_covariates, baseline_hazard, exposure_loghr, censor_time
/// (optional). Unknown keys are rejected.
inline SynthSpec parse_synth_spec(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(std::string("synth spec: ") + e.what());
  }
  if (!doc.is_object()) {
    throw schema_error("synth spec: top level must be a JSON object");
  }
  static const std::set<std::string> allowed = {
      "n",   "seed",          "confounders",    "null_covariates",
      "baseline_hazard", "exposure_loghr", "censor_time"};
  for (const auto& [key, value] : doc.items()) {
    if (allowed.count(key) == 0) {
      throw schema_error("synth spec: unknown key '" + key + "'");
    }
  }
  SynthSpec spec;
  if (!doc.contains("n") || !doc.contains("seed")) {
    throw schema_error("synth spec: keys 'n' and 'seed' are required");
  }
  spec.n = doc.at("n").get<int>();
  spec.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("confounders")) {
    for (const auto& c : doc.at("confounders")) {
      ConfounderSpec cs;
      cs.name = c.at("name").get<std::string>();
      if (c.contains("effect_on_exposure")) {
        cs.effect_on_exposure = c.at("effect_on_exposure").get<double>();
      }
      if (c.contains("effect_on_hazard")) {
        cs.effect_on_hazard = c.at("effect_on_hazard").get<double>();
      }
      spec.confounders.push_back(std::move(cs));
    }
  }
  if (doc.contains("null_covariates")) {
    spec.null_covariates = doc.at("null_covariates").get<int>();
  }
  if (doc.contains("baseline_hazard")) {
    spec.baseline_hazard = doc.at("baseline_hazard").get<double>();
  }
  if (doc.contains("exposure_loghr")) {
    spec.exposure_loghr = doc.at("exposure_loghr").get<double>();
  }
  if (doc.contains("censor_time")) {
    spec.censor_time = doc.at("censor_time").get<double>();
  }
  spec.validate();
  return spec;
}

inline SynthSpec read_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_synth_spec(buf.str());
}

}  // namespace obsbias
