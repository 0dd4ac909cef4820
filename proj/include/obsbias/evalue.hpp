#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "obsbias/error.hpp"

namespace obsbias {

/// Ratio scale an effect estimate is reported on.
enum class Scale { RiskRatio, OddsRatio, HazardRatio };

inline std::string to_string(Scale scale) {
  switch (scale) {
    case Scale::RiskRatio:
      return "risk_ratio";
    case Scale::OddsRatio:
      return "odds_ratio";
    case Scale::HazardRatio:
      return "hazard_ratio";
  }
  return "unknown";
}

/// Parse a scale tag ("rr", "or", "hr", or the long names above).
inline Scale parse_scale(const std::string& text) {
  if (text == "rr" || text == "risk_ratio") return Scale::RiskRatio;
  if (text == "or" || text == "odds_ratio") return Scale::OddsRatio;
  if (text == "hr" || text == "hazard_ratio") return Scale::HazardRatio;
  throw domain_error("unknown scale '" + text + "' (expected rr, or, hr)");
}

/// A ratio-scale effect with its confidence interval.
struct EffectEstimate {
  double estimate = 1.0;
  double lcl = 1.0;
  double ucl = 1.0;
  Scale scale = Scale::RiskRatio;
  bool outcome_common = false;

  void validate() const {
    if (!(std::isfinite(estimate) && std::isfinite(lcl) &&
          std::isfinite(ucl))) {
      throw domain_error("effect estimate must be finite");
    }
    if (!(lcl > 0.0)) {
      throw domain_error("effect bounds must be positive");
    }
    if (!(lcl <= estimate && estimate <= ucl)) {
      throw domain_error(
          "effect interval must satisfy lcl <= estimate <= ucl");
    }
  }
};

/// Sensitivity parameters of a hypothetical binary confounder.
struct TipParameters {
  double rr_eu = 1.0;  // confounder-exposure association (risk ratio)
  double rr_ud = 1.0;  // confounder-outcome association (risk ratio)
  double p0 = 0.0;     // prevalence among the unexposed
  double p1 = 0.0;     // prevalence among the exposed

  void validate() const {
    if (!(rr_eu >= 1.0 && rr_ud >= 1.0)) {
      throw domain_error("tip parameters rr_eu and rr_ud must be >= 1");
    }
    if (!(p0 >= 0.0 && p0 <= 1.0 && p1 >= 0.0 && p1 <= 1.0)) {
      throw domain_error("tip prevalences must lie in [0, 1]");
    }
  }
};

struct EvalueResult {
  double evalue_point = 1.0;
  double evalue_ci = 1.0;
};

/// Fold a ratio-scale bound onto the >= 1 side of the null.
inline double orient(double bound) {
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw domain_error("bound must be positive and finite");
  }
  return bound >= 1.0 ? bound : 1.0 / bound;
}

/// Map a bound to the (approximate) risk-ratio scale. Odds and hazard
/// ratios pass through unchanged when the outcome is rare; with a common
/// outcome the square-root approximation applies to odds ratios and the
/// limiting-bound transform to hazard ratios.
inline double to_risk_ratio_scale(double value, Scale scale,
                                  bool outcome_common) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw domain_error("bound must be positive and finite");
  }
  if (scale == Scale::RiskRatio || !outcome_common) {
    return value;
  }
  if (scale == Scale::OddsRatio) {
    return std::sqrt(value);
  }
  // Hazard ratio, common outcome.
  const double num = 1.0 - std::pow(0.5, std::sqrt(value));
  const double den = 1.0 - std::pow(0.5, std::sqrt(1.0 / value));
  return num / den;
}

/// E-value of a risk-ratio bound b >= 1: b + sqrt(b * (b - 1)).
inline double evalue_of_bound(double rr_bound) {
  if (!(rr_bound >= 1.0) || !std::isfinite(rr_bound)) {
    throw domain_error("risk-ratio bound must be >= 1 (orient first)");
  }
  return rr_bound + std::sqrt(rr_bound * (rr_bound - 1.0));
}

/// E-values for the point estimate and for the limiting confidence bound.
/// An interval that already contains the null yields evalue_ci = 1.
inline EvalueResult evalue(const EffectEstimate& effect) {
  effect.validate();
  const auto one_bound = [&](double b) {
    return evalue_of_bound(
        to_risk_ratio_scale(orient(b), effect.scale, effect.outcome_common));
  };
  EvalueResult out;
  out.evalue_point = one_bound(effect.estimate);
  if (effect.lcl <= 1.0 && effect.ucl >= 1.0) {
    out.evalue_ci = 1.0;
  } else {
    out.evalue_ci = one_bound(effect.lcl > 1.0 ? effect.lcl : effect.ucl);
  }
  return out;
}

/// E-value for moving the limiting bound of the full-model interval
/// (lb, ub) to the corresponding bound of the interval (lb_adj, ub_adj)
/// observed without a covariate. The limiting side is chosen from the
/// full model; when the full interval spans 1 the side whose bound is
/// closer to 1 after orientation is used. Both selected bounds are
/// transformed to the risk-ratio scale, then the >= 1 ratio of the pair
/// is taken. A limiting bound below 1 calls for reciprocating both
/// bounds together; because the transforms commute with reciprocals,
/// the max/min ratio absorbs that rule.
inline double observed_covariate_evalue(double lb, double ub, double lb_adj,
                                        double ub_adj, Scale scale,
                                        bool outcome_common) {
  for (double b : {lb, ub, lb_adj, ub_adj}) {
    if (!(b > 0.0) || !std::isfinite(b)) {
      throw domain_error("bounds must be positive and finite");
    }
  }
  bool lower_side;
  if (lb > 1.0) {
    lower_side = true;
  } else if (ub < 1.0) {
    lower_side = false;
  } else {
    lower_side = orient(lb) <= orient(ub);
  }
  const double b_full = lower_side ? lb : ub;
  const double b_adj = lower_side ? lb_adj : ub_adj;
  const double full_rr = to_risk_ratio_scale(b_full, scale, outcome_common);
  const double adj_rr = to_risk_ratio_scale(b_adj, scale, outcome_common);
  const double ratio =
      std::max(full_rr, adj_rr) / std::min(full_rr, adj_rr);
  return evalue_of_bound(ratio);
}

/// Adjusted limiting bound under a binary confounder with outcome
/// association rr_ud and arm prevalences p1 (exposed), p0 (unexposed).
inline double lin_adjust(double lb_obs, const TipParameters& params) {
  if (!(lb_obs > 0.0) || !std::isfinite(lb_obs)) {
    throw domain_error("limiting bound must be positive and finite");
  }
  params.validate();
  const double num = params.rr_ud * params.p0 + (1.0 - params.p0);
  const double den = params.rr_ud * params.p1 + (1.0 - params.p1);
  return lb_obs * num / den;
}

/// Confounder-outcome association rr_ud that drags the limiting bound
/// lb_obs to the null given a confounder-exposure association rr_eu.
inline double tip_rr_ud(double lb_obs, double rr_eu) {
  if (!(lb_obs >= 1.0) || !std::isfinite(lb_obs)) {
    throw domain_error("limiting bound must be >= 1 (orient first)");
  }
  if (!(rr_eu > 1.0) || !std::isfinite(rr_eu)) {
    throw domain_error("rr_eu must be > 1");
  }
  if (rr_eu <= lb_obs && lb_obs > 1.0) {
    throw domain_error("no finite tipping association: rr_eu must exceed "
                       "the limiting bound");
  }
  return lb_obs * (rr_eu - 1.0) / (rr_eu - lb_obs);
}

}  // namespace obsbias
