#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "obsbias/config.hpp"
#include "obsbias/cox.hpp"
#include "obsbias/dataset.hpp"
#include "obsbias/error.hpp"
#include "obsbias/evalue.hpp"
#include "obsbias/glm.hpp"

namespace obsbias {

enum class RecordKind { Covariate, Group, Tip, Full };

inline std::string to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::Covariate:
      return "covariate";
    case RecordKind::Group:
      return "group";
    case RecordKind::Tip:
      return "tip";
    case RecordKind::Full:
      return "full";
  }
  return "unknown";
}

/// One row of the observed-bias analysis. `oce` is NaN for the full
/// record; a nonempty `error` marks a refit that failed (numeric fields
/// are NaN in that case).
struct ObservedBiasRecord {
  std::string label;
  RecordKind kind = RecordKind::Covariate;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double lcl = std::numeric_limits<double>::quiet_NaN();
  double ucl = std::numeric_limits<double>::quiet_NaN();
  double oce = std::numeric_limits<double>::quiet_NaN();
  std::string error;

  bool failed() const { return !error.empty(); }
};

struct BalanceRecord {
  std::string covariate;
  double smd_unweighted = 0.0;
  double smd_weighted = 0.0;
};

/// Overlap weights: 1 - p for the exposed, p for the unexposed.
inline std::vector<double> overlap_weights(std::span<const double> propensity,
                                           std::span<const double> exposure) {
  if (propensity.size() != exposure.size()) {
    throw schema_error("propensity and exposure lengths differ");
  }
  std::vector<double> w(propensity.size());
  for (std::size_t i = 0; i < propensity.size(); ++i) {
    if (!(propensity[i] > 0.0 && propensity[i] < 1.0)) {
      throw domain_error("propensity scores must lie strictly in (0, 1)");
    }
    if (exposure[i] != 0.0 && exposure[i] != 1.0) {
      throw domain_error("exposure must be binary {0, 1}");
    }
    w[i] = exposure[i] == 1.0 ? 1.0 - propensity[i] : propensity[i];
  }
  return w;
}

/// Standardized mean difference between arms: (weighted) arm means over
/// the pooled SD of the unweighted arm variances, so pre- and
/// post-weighting rows share one ruler.
inline double standardized_mean_difference(
    std::span<const double> x, std::span<const double> exposure,
    std::optional<std::span<const double>> weights = std::nullopt) {
  if (x.size() != exposure.size() ||
      (weights && weights->size() != x.size())) {
    throw schema_error("smd inputs have unequal lengths");
  }
  double sw1 = 0.0, sw0 = 0.0, m1 = 0.0, m0 = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw domain_error("smd weights must be positive and finite");
    }
    if (exposure[i] == 1.0) {
      sw1 += w;
      m1 += w * x[i];
      ++n1;
    } else if (exposure[i] == 0.0) {
      sw0 += w;
      m0 += w * x[i];
      ++n0;
    } else {
      throw domain_error("exposure must be binary {0, 1}");
    }
  }
  if (n1 == 0 || n0 == 0) {
    throw domain_error("smd needs both arms nonempty");
  }
  m1 /= sw1;
  m0 /= sw0;
  // Unweighted arm variances (n-1 denominator); a single-subject arm
  // contributes zero variance.
  double u1 = 0.0, u0 = 0.0, v1 = 0.0, v0 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    (exposure[i] == 1.0 ? u1 : u0) += x[i];
  }
  u1 /= static_cast<double>(n1);
  u0 /= static_cast<double>(n0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - (exposure[i] == 1.0 ? u1 : u0);
    (exposure[i] == 1.0 ? v1 : v0) += d * d;
  }
  v1 = n1 > 1 ? v1 / static_cast<double>(n1 - 1) : 0.0;
  v0 = n0 > 1 ? v0 / static_cast<double>(n0 - 1) : 0.0;
  const double pooled = std::sqrt(0.5 * (v1 + v0));
  if (!(pooled > 0.0)) {
    throw domain_error("undefined SMD: pooled standard deviation is zero");
  }
  return (m1 - m0) / pooled;
}

struct FullAnalysis {
  ObservedBiasRecord full;
  std::vector<BalanceRecord> balance;
  GlmFit ps_fit;
  CoxFit outcome_fit;
  std::vector<double> propensity;
  std::vector<double> weights;
};

namespace detail {

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(
                                               v.size()));
}

inline void require_complete(const Dataset& data,
                             const std::vector<std::string>& used) {
  for (const auto& name : used) {
    const auto& col = data.column(name);
    for (std::size_t r = 0; r < col.size(); ++r) {
      if (std::isnan(col[r])) {
        throw domain_error("column '" + name + "' has a missing value at "
                           "row " + std::to_string(r + 1) +
                           "; filter to complete cases first");
      }
    }
  }
}

inline std::vector<std::string> used_columns(const AnalysisConfig& cfg) {
  std::vector<std::string> used = {cfg.exposure, cfg.time, cfg.event};
  used.insert(used.end(), cfg.covariates.begin(), cfg.covariates.end());
  return used;
}

/// Propensity model, overlap weights, weighted Cox — for one covariate
/// subset. The workhorse behind both the full analysis and every drop.
struct ModelRun {
  GlmFit ps_fit;
  CoxFit outcome_fit;
  std::vector<double> propensity;
  std::vector<double> weights;
  EffectEstimate effect;
};

inline ModelRun run_models(const Dataset& data, const AnalysisConfig& cfg,
                           const std::vector<std::string>& covariates) {
  const auto n = static_cast<Eigen::Index>(data.n_rows());
  const auto& exposure = data.column(cfg.exposure);

  ModelRun run;
  try {
    DesignMatrix ps;
    ps.names.push_back("(Intercept)");
    for (const auto& c : covariates) ps.names.push_back(c);
    ps.X.resize(n, static_cast<Eigen::Index>(covariates.size()) + 1);
    ps.X.col(0).setOnes();
    for (std::size_t j = 0; j < covariates.size(); ++j) {
      ps.X.col(static_cast<Eigen::Index>(j) + 1) =
          to_eigen(data.column(covariates[j]));
    }
    ps.y = to_eigen(exposure);
    run.ps_fit = fit_logistic(ps);
    const Eigen::VectorXd p = predict_probabilities(run.ps_fit, ps);
    run.propensity.assign(p.data(), p.data() + p.size());
  } catch (const error& e) {
    throw fit_error("propensity model: " + std::string(e.what()));
  }

  run.weights = overlap_weights(run.propensity, exposure);

  try {
    SurvivalData surv;
    surv.names.push_back(cfg.exposure);
    for (const auto& c : covariates) surv.names.push_back(c);
    surv.X.resize(n, static_cast<Eigen::Index>(covariates.size()) + 1);
    surv.X.col(0) = to_eigen(exposure);
    for (std::size_t j = 0; j < covariates.size(); ++j) {
      surv.X.col(static_cast<Eigen::Index>(j) + 1) =
          to_eigen(data.column(covariates[j]));
    }
    surv.time = to_eigen(data.column(cfg.time));
    surv.event = to_eigen(data.column(cfg.event));
    surv.weights = to_eigen(run.weights);
    run.outcome_fit = fit_cox(surv, TiesMethod::Efron);
    run.effect = effect_with_ci(run.outcome_fit, cfg.exposure,
                                cfg.ci_level);
    run.effect.outcome_common = cfg.outcome_common;
  } catch (const error& e) {
    throw fit_error("outcome model: " + std::string(e.what()));
  }
  return run;
}

}  // namespace detail

/// Full analysis: propensity model on all covariates, overlap weights,
/// weighted Cox, pre/post balance per covariate.
inline FullAnalysis run_full_analysis(const Dataset& data,
                                      const AnalysisConfig& config) {
  config.validate();
  data.validate();
  detail::require_complete(data, detail::used_columns(config));
  if (data.n_rows() == 0) {
    throw domain_error("dataset has no rows");
  }

  auto run = detail::run_models(data, config, config.covariates);

  FullAnalysis out;
  out.ps_fit = std::move(run.ps_fit);
  out.outcome_fit = std::move(run.outcome_fit);
  out.propensity = std::move(run.propensity);
  out.weights = std::move(run.weights);
  out.full.label = "Full Model";
  out.full.kind = RecordKind::Full;
  out.full.estimate = run.effect.estimate;
  out.full.lcl = run.effect.lcl;
  out.full.ucl = run.effect.ucl;

  const auto& exposure = data.column(config.exposure);
  for (const auto& c : config.covariates) {
    BalanceRecord rec;
    rec.covariate = c;
    rec.smd_unweighted =
        standardized_mean_difference(data.column(c), exposure);
    rec.smd_weighted = standardized_mean_difference(
        data.column(c), exposure, std::span<const double>(out.weights));
    out.balance.push_back(std::move(rec));
  }
  return out;
}

/// One entry of the drop plan: the covariates the refit KEEPS.
struct DropEntry {
  std::string label;
  RecordKind kind = RecordKind::Covariate;
  std::vector<std::string> covariates;
};

/// Default plan: each covariate alone, then each config group, each
/// removing its columns from both models.
inline std::vector<DropEntry> build_drop_plan(const AnalysisConfig& config) {
  std::vector<DropEntry> plan;
  for (const auto& dropped : config.covariates) {
    DropEntry e;
    e.label = dropped;
    e.kind = RecordKind::Covariate;
    for (const auto& c : config.covariates) {
      if (c != dropped) e.covariates.push_back(c);
    }
    plan.push_back(std::move(e));
  }
  for (const auto& [name, members] : config.groups) {
    DropEntry e;
    e.label = name;
    e.kind = RecordKind::Group;
    const std::set<std::string> drop(members.begin(), members.end());
    for (const auto& c : config.covariates) {
      if (drop.count(c) == 0) e.covariates.push_back(c);
    }
    plan.push_back(std::move(e));
  }
  return plan;
}

/// Leave-covariate-out refits against an explicit plan, given an
/// already-computed full analysis. Returns the full record followed by
/// one record per plan entry, in plan order. A failed refit yields a
/// record flagged with the error; the batch never aborts.
inline std::vector<ObservedBiasRecord> run_observed_bias(
    const Dataset& data, const AnalysisConfig& config,
    const FullAnalysis& full, const std::vector<DropEntry>& plan,
    int workers = 1) {
  std::vector<ObservedBiasRecord> records(plan.size() + 1);
  records[0] = full.full;

  const auto run_entry = [&](std::size_t k) {
    ObservedBiasRecord rec;
    rec.label = plan[k].label;
    rec.kind = plan[k].kind;
    try {
      const auto run = detail::run_models(data, config, plan[k].covariates);
      rec.estimate = run.effect.estimate;
      rec.lcl = run.effect.lcl;
      rec.ucl = run.effect.ucl;
      rec.oce = observed_covariate_evalue(
          full.full.lcl, full.full.ucl, rec.lcl, rec.ucl,
          Scale::HazardRatio, config.outcome_common);
    } catch (const error& e) {
      rec = ObservedBiasRecord{};
      rec.label = plan[k].label;
      rec.kind = plan[k].kind;
      rec.error = e.what();
    }
    records[k + 1] = std::move(rec);
  };

  const int thread_count = std::max(
      1, std::min<int>(workers, static_cast<int>(plan.size())));
  if (thread_count <= 1) {
    for (std::size_t k = 0; k < plan.size(); ++k) run_entry(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) {
      pool.emplace_back([&]() {
        for (std::size_t k = next.fetch_add(1); k < plan.size();
             k = next.fetch_add(1)) {
          run_entry(k);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return records;
}

inline std::vector<ObservedBiasRecord> run_observed_bias(
    const Dataset& data, const AnalysisConfig& config, int workers = 1) {
  const FullAnalysis full = run_full_analysis(data, config);
  return run_observed_bias(data, config, full, build_drop_plan(config),
                           workers);
}

/// Hypothetical-confounder rows: the full triple divided by the limiting
/// bound (Tip LB) and by the point estimate (Tip Point Est). The Tip LB
/// row's own limiting bound lands exactly on 1 by construction.
inline std::pair<ObservedBiasRecord, ObservedBiasRecord> tip_rows(
    const ObservedBiasRecord& full, const AnalysisConfig& config) {
  if (full.failed() || !(full.lcl > 0.0)) {
    throw domain_error("tip rows need a valid full-model record");
  }
  double limiting;
  if (full.lcl > 1.0) {
    limiting = full.lcl;
  } else if (full.ucl < 1.0) {
    limiting = full.ucl;
  } else {
    limiting = orient(full.lcl) <= orient(full.ucl) ? full.lcl : full.ucl;
  }
  const auto make = [&](double tip, const std::string& label) {
    ObservedBiasRecord rec;
    rec.label = label;
    rec.kind = RecordKind::Tip;
    rec.estimate = full.estimate / tip;
    rec.lcl = full.lcl / tip;
    rec.ucl = full.ucl / tip;
    rec.oce = observed_covariate_evalue(full.lcl, full.ucl, rec.lcl,
                                        rec.ucl, Scale::HazardRatio,
                                        config.outcome_common);
    return rec;
  };
  return {make(limiting, "Hypothetical unmeasured confounder (Tip LB)"),
          make(full.estimate,
               "Hypothetical unmeasured confounder (Tip Point Est)")};
}

/// Stable ascending sort on one of {estimate, lcl, ucl, oce}; ties break
/// on the label. Failed records (NaN keys) sort last; the full record
/// sorts with oce = 1 when ordering by oce.
inline std::vector<ObservedBiasRecord> order_records(
    std::vector<ObservedBiasRecord> records, const std::string& by) {
  if (by != "estimate" && by != "lcl" && by != "ucl" && by != "oce") {
    throw schema_error("unknown ordering field '" + by +
                       "' (expected estimate, lcl, ucl, oce)");
  }
  const auto key = [&](const ObservedBiasRecord& r) -> double {
    if (by == "estimate") return r.estimate;
    if (by == "lcl") return r.lcl;
    if (by == "ucl") return r.ucl;
    return r.kind == RecordKind::Full && !r.failed() ? 1.0 : r.oce;
  };
  std::stable_sort(records.begin(), records.end(),
                   [&](const ObservedBiasRecord& a,
                       const ObservedBiasRecord& b) {
                     const double ka = key(a), kb = key(b);
                     const bool na = std::isnan(ka), nb = std::isnan(kb);
                     if (na != nb) return nb;  // NaN sorts last
                     if (!na && ka != kb) return ka < kb;
                     return a.label < b.label;
                   });
  return records;
}

}  // namespace obsbias
