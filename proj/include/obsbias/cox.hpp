#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "obsbias/error.hpp"
#include "obsbias/evalue.hpp"
#include "obsbias/stats.hpp"

namespace obsbias {

enum class TiesMethod { Efron, Breslow };

inline std::string to_string(TiesMethod ties) {
  return ties == TiesMethod::Efron ? "efron" : "breslow";
}

/// Right-censored survival data with case weights. Covariates carry no
/// intercept column (the baseline hazard absorbs it).
struct SurvivalData {
  std::vector<std::string> names;
  Eigen::MatrixXd X;        // n x p
  Eigen::VectorXd time;     // > 0
  Eigen::VectorXd event;    // {0, 1}
  Eigen::VectorXd weights;  // > 0

  void validate() const {
    const auto n = X.rows();
    if (X.cols() < 1 || names.size() != static_cast<std::size_t>(X.cols())) {
      throw schema_error("survival design columns and names disagree");
    }
    if (time.size() != n || event.size() != n || weights.size() != n) {
      throw schema_error("survival data vectors have unequal lengths");
    }
    if (!X.allFinite()) {
      throw domain_error("survival design contains non-finite values");
    }
    double n_events = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(time[i] > 0.0) || !std::isfinite(time[i])) {
        throw domain_error("times must be positive and finite (row " +
                           std::to_string(i + 1) + ")");
      }
      if (event[i] != 0.0 && event[i] != 1.0) {
        throw domain_error("event indicator must be binary {0, 1} (row " +
                           std::to_string(i + 1) + ")");
      }
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
        throw domain_error("weights must be positive and finite (row " +
                           std::to_string(i + 1) + ")");
      }
      n_events += event[i];
    }
    if (n_events == 0.0) {
      throw fit_error("degenerate survival data: no events observed");
    }
  }
};

struct CoxFit {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;       // log-hazard units
  Eigen::MatrixXd robust_covariance;  // weighted sandwich estimator
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  TiesMethod ties = TiesMethod::Efron;
};

/// Value, gradient, and information of the weighted partial
/// log-likelihood at a coefficient vector.
struct CoxEval {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd information;  // negative Hessian
};

namespace detail {

/// Subjects sorted by ascending time with events before censorings at
/// equal times, plus the equal-time blocks. Deaths sit at the front of
/// each block, so the risk set of a death at time t is everyone with
/// time >= t, censored-at-t subjects included.
struct RiskIndex {
  std::vector<Eigen::Index> order;
  struct Block {
    Eigen::Index lo = 0;      // [lo, hi) into order
    Eigen::Index hi = 0;
    Eigen::Index deaths = 0;  // order[lo .. lo+deaths)
    double time = 0.0;
  };
  std::vector<Block> blocks;  // ascending time
};

inline RiskIndex build_risk_index(const SurvivalData& data) {
  RiskIndex idx;
  const Eigen::Index n = data.time.size();
  idx.order.resize(static_cast<std::size_t>(n));
  std::iota(idx.order.begin(), idx.order.end(), Eigen::Index{0});
  std::sort(idx.order.begin(), idx.order.end(),
            [&](Eigen::Index a, Eigen::Index b) {
              if (data.time[a] != data.time[b]) {
                return data.time[a] < data.time[b];
              }
              if (data.event[a] != data.event[b]) {
                return data.event[a] > data.event[b];
              }
              return a < b;
            });
  Eigen::Index lo = 0;
  while (lo < n) {
    Eigen::Index hi = lo;
    const double t = data.time[idx.order[static_cast<std::size_t>(lo)]];
    Eigen::Index deaths = 0;
    while (hi < n &&
           data.time[idx.order[static_cast<std::size_t>(hi)]] == t) {
      deaths += static_cast<Eigen::Index>(
          data.event[idx.order[static_cast<std::size_t>(hi)]]);
      ++hi;
    }
    idx.blocks.push_back({lo, hi, deaths, t});
    lo = hi;
  }
  return idx;
}

/// Per-death-time hazard quantities used by the score residuals. For a
/// block with d deaths the tied-death loop runs over m = 0..terms-1 with
/// fraction f_m (Efron: m/d over d terms; Breslow: a single term, f = 0)
/// and hazard increment lambda_m = (death weight / terms) / denom_m.
struct HazardTerms {
  double lambda = 0.0;              // sum_m lambda_m for this block
  Eigen::VectorXd lambda_xbar;      // sum_m lambda_m * xbar_m
  double f_lambda = 0.0;            // sum_m f_m * lambda_m
  Eigen::VectorXd f_lambda_xbar;    // sum_m f_m * lambda_m * xbar_m
  Eigen::VectorXd xbar_mean;        // mean of xbar_m over the terms
  double cum_lambda = 0.0;          // cumulative lambda through this block
  Eigen::VectorXd cum_lambda_xbar;  // cumulative lambda * xbar
};

/// Single descending pass over risk sets. Computes loglik / gradient /
/// information; optionally records per-block hazard terms and the
/// centered risk scores exp(eta - max eta) for the residual pass.
inline CoxEval cox_eval_impl(const SurvivalData& data, TiesMethod ties,
                             const Eigen::VectorXd& beta,
                             const RiskIndex& idx,
                             std::vector<HazardTerms>* terms_out,
                             Eigen::VectorXd* centered_risk_out) {
  const Eigen::Index n = data.X.rows();
  const Eigen::Index p = data.X.cols();
  if (beta.size() != p) {
    throw schema_error("coefficient vector length does not match design");
  }

  // Center the linear predictor; the partial likelihood is exactly
  // invariant to the shift and exp() can no longer overflow.
  Eigen::VectorXd eta = data.X * beta;
  const double center = eta.maxCoeff();
  Eigen::VectorXd risk(n);  // w_i * exp(eta_i - center)
  Eigen::VectorXd rexp(n);  // exp(eta_i - center)
  for (Eigen::Index i = 0; i < n; ++i) {
    rexp[i] = std::exp(eta[i] - center);
    risk[i] = data.weights[i] * rexp[i];
  }
  if (centered_risk_out != nullptr) {
    *centered_risk_out = rexp;
  }
  if (terms_out != nullptr) {
    terms_out->assign(idx.blocks.size(), HazardTerms{});
  }

  CoxEval eval;
  eval.gradient = Eigen::VectorXd::Zero(p);
  eval.information = Eigen::MatrixXd::Zero(p, p);

  double S = 0.0;                                   // sum w*r over risk set
  Eigen::VectorXd A = Eigen::VectorXd::Zero(p);     // sum w*r*x
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);  // sum w*r*x*x'

  for (std::size_t b = idx.blocks.size(); b-- > 0;) {
    const auto& block = idx.blocks[b];
    for (Eigen::Index k = block.lo; k < block.hi; ++k) {
      const Eigen::Index i = idx.order[static_cast<std::size_t>(k)];
      S += risk[i];
      A.noalias() += risk[i] * data.X.row(i).transpose();
      C.noalias() += risk[i] * data.X.row(i).transpose() * data.X.row(i);
    }
    const Eigen::Index d = block.deaths;
    if (d == 0) {
      continue;
    }

    double death_weight = 0.0;  // sum of w over deaths
    double E = 0.0;             // sum w*r over deaths
    Eigen::VectorXd sum_wx = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd B = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd CD = Eigen::MatrixXd::Zero(p, p);
    double sum_weta = 0.0;
    for (Eigen::Index k = block.lo; k < block.lo + d; ++k) {
      const Eigen::Index i = idx.order[static_cast<std::size_t>(k)];
      death_weight += data.weights[i];
      E += risk[i];
      sum_wx.noalias() += data.weights[i] * data.X.row(i).transpose();
      B.noalias() += risk[i] * data.X.row(i).transpose();
      CD.noalias() += risk[i] * data.X.row(i).transpose() * data.X.row(i);
      sum_weta += data.weights[i] * (eta[i] - center);
    }

    const Eigen::Index terms = ties == TiesMethod::Efron ? d : 1;
    const double per_term = death_weight / static_cast<double>(terms);
    HazardTerms ht;
    if (terms_out != nullptr) {
      ht.lambda_xbar = Eigen::VectorXd::Zero(p);
      ht.f_lambda_xbar = Eigen::VectorXd::Zero(p);
      ht.xbar_mean = Eigen::VectorXd::Zero(p);
    }
    for (Eigen::Index m = 0; m < terms; ++m) {
      const double f = ties == TiesMethod::Efron
                           ? static_cast<double>(m) / static_cast<double>(d)
                           : 0.0;
      const double denom = S - f * E;
      const Eigen::VectorXd xbar = (A - f * B) / denom;
      eval.loglik -= per_term * std::log(denom);
      eval.gradient.noalias() -= per_term * xbar;
      eval.information.noalias() +=
          per_term * ((C - f * CD) / denom - xbar * xbar.transpose());
      if (terms_out != nullptr) {
        const double lambda = per_term / denom;
        ht.lambda += lambda;
        ht.lambda_xbar.noalias() += lambda * xbar;
        ht.f_lambda += f * lambda;
        ht.f_lambda_xbar.noalias() += f * lambda * xbar;
        ht.xbar_mean.noalias() += xbar / static_cast<double>(terms);
      }
    }
    eval.loglik += sum_weta;
    eval.gradient.noalias() += sum_wx;
    if (terms_out != nullptr) {
      (*terms_out)[b] = std::move(ht);
    }
  }

  // Ascending pass: convert per-block hazard sums into cumulative sums
  // through each block (deaths at time t count for everyone still at
  // risk at t).
  if (terms_out != nullptr) {
    double running = 0.0;
    Eigen::VectorXd running_x = Eigen::VectorXd::Zero(p);
    for (std::size_t b = 0; b < idx.blocks.size(); ++b) {
      auto& ht = (*terms_out)[b];
      if (idx.blocks[b].deaths > 0) {
        running += ht.lambda;
        running_x.noalias() += ht.lambda_xbar;
      }
      ht.cum_lambda = running;
      ht.cum_lambda_xbar = running_x;
    }
  }
  return eval;
}

/// Score residuals u_i (one p-vector per subject) of the weighted
/// partial likelihood: sum_i w_i u_i equals the total score.
inline Eigen::MatrixXd cox_score_residuals(
    const SurvivalData& data, const RiskIndex& idx,
    const std::vector<HazardTerms>& terms, const Eigen::VectorXd& rexp) {
  const Eigen::Index p = data.X.cols();
  Eigen::MatrixXd resid(data.X.rows(), p);
  for (std::size_t b = 0; b < idx.blocks.size(); ++b) {
    const auto& block = idx.blocks[b];
    const auto& ht = terms[b];
    for (Eigen::Index k = block.lo; k < block.hi; ++k) {
      const Eigen::Index i = idx.order[static_cast<std::size_t>(k)];
      const Eigen::VectorXd xi = data.X.row(i).transpose();
      Eigen::VectorXd u =
          -rexp[i] * (ht.cum_lambda * xi - ht.cum_lambda_xbar);
      if (k < block.lo + block.deaths) {
        // A death keeps only the (1 - f_m) share of its own time's
        // hazard terms.
        u.noalias() += xi - ht.xbar_mean;
        u.noalias() += rexp[i] * (ht.f_lambda * xi - ht.f_lambda_xbar);
      }
      resid.row(i) = u.transpose();
    }
  }
  return resid;
}

[[noreturn]] inline void throw_cox_rank_deficiency(
    const Eigen::MatrixXd& information,
    const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(information);
  const auto rank = qr.rank();
  std::size_t offending = names.size() - 1;
  if (rank < information.cols()) {
    offending =
        static_cast<std::size_t>(qr.colsPermutation().indices()[rank]);
  }
  throw fit_error("rank-deficient survival design: column '" +
                  names[offending] + "' carries no information on the "
                  "risk sets");
}

}  // namespace detail

/// Weighted Cox partial log-likelihood with analytic gradient and
/// information at an arbitrary coefficient vector.
inline CoxEval cox_partial_loglik(const SurvivalData& data, TiesMethod ties,
                                  const Eigen::VectorXd& beta) {
  data.validate();
  const auto idx = detail::build_risk_index(data);
  return detail::cox_eval_impl(data, ties, beta, idx, nullptr, nullptr);
}

/// Case-weighted Cox proportional-hazards fit. Newton-Raphson from zero
/// with step-halving; robust covariance is the weighted sandwich built
/// from score residuals.
inline CoxFit fit_cox(const SurvivalData& data,
                      TiesMethod ties = TiesMethod::Efron) {
  data.validate();
  const Eigen::Index p = data.X.cols();
  constexpr int kMaxIter = 30;
  constexpr double kLoglikTol = 1e-9;
  constexpr double kScoreTol = 1e-6;
  constexpr double kDivergenceBound = 22.0;

  const auto idx = detail::build_risk_index(data);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxEval eval = detail::cox_eval_impl(data, ties, beta, idx, nullptr,
                                       nullptr);
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(eval.information);
    if (qr.rank() < p) {
      detail::throw_cox_rank_deficiency(eval.information, data.names);
    }
  }

  CoxFit fit;
  fit.names = data.names;
  fit.ties = ties;
  double loglik = eval.loglik;
  double last_change = 0.0;

  for (int iter = 1; iter <= kMaxIter; ++iter) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(eval.information);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
      detail::throw_cox_rank_deficiency(eval.information, data.names);
    }
    Eigen::VectorXd step = ldlt.solve(eval.gradient);

    // Acceptance slack scales with the loglik magnitude: its evaluation
    // noise (the centering constant moves with beta) sits well above
    // machine epsilon on large weighted fits.
    const double slack = 1e-11 * std::max(1.0, std::fabs(loglik));
    Eigen::VectorXd candidate;
    CoxEval cand_eval;
    bool accepted = false;
    for (int half = 0; half < 30; ++half) {
      candidate = beta + step;
      cand_eval =
          detail::cox_eval_impl(data, ties, candidate, idx, nullptr, nullptr);
      if (cand_eval.loglik >= loglik - slack) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      throw fit_error("cox fit failed: partial likelihood could not be "
                      "increased at iteration " + std::to_string(iter));
    }

    last_change = std::fabs(cand_eval.loglik - loglik);
    const double step_norm = (candidate - beta).cwiseAbs().maxCoeff();
    beta = candidate;
    loglik = cand_eval.loglik;
    eval = cand_eval;
    fit.iterations = iter;

    const double score_max = eval.gradient.cwiseAbs().maxCoeff();
    if (last_change < kLoglikTol && score_max < kScoreTol) {
      fit.converged = true;
      // Polish down to the arithmetic floor so the solution does not
      // depend on the loglik scale (weights multiply it).
      if (score_max < 1e-8 || step_norm < 1e-13) {
        break;
      }
    }
    if (beta.cwiseAbs().maxCoeff() > kDivergenceBound && !fit.converged) {
      Eigen::Index worst = 0;
      beta.cwiseAbs().maxCoeff(&worst);
      throw fit_error("monotone partial likelihood: coefficient for '" +
                      data.names[static_cast<std::size_t>(worst)] +
                      "' is diverging");
    }
  }

  if (!fit.converged) {
    std::ostringstream msg;
    msg << "cox fit did not converge after " << fit.iterations
        << " iterations (|d loglik| = " << last_change << ")";
    throw fit_error(msg.str());
  }

  fit.coefficients = beta;
  fit.loglik = loglik;

  // Robust covariance: I^{-1} (sum_i (w_i u_i)(w_i u_i)') I^{-1}.
  std::vector<detail::HazardTerms> terms;
  Eigen::VectorXd rexp;
  eval = detail::cox_eval_impl(data, ties, beta, idx, &terms, &rexp);
  const Eigen::MatrixXd resid =
      detail::cox_score_residuals(data, idx, terms, rexp);
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < resid.rows(); ++i) {
    const Eigen::VectorXd wu = data.weights[i] * resid.row(i).transpose();
    meat.noalias() += wu * wu.transpose();
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(eval.information);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
    detail::throw_cox_rank_deficiency(eval.information, data.names);
  }
  const Eigen::MatrixXd bread =
      ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd robust = bread * meat * bread;
  fit.robust_covariance = 0.5 * (robust + robust.transpose());
  return fit;
}

/// Hazard-ratio effect estimate with a two-sided normal confidence
/// interval from the robust standard error.
inline EffectEstimate effect_with_ci(const CoxFit& fit,
                                     const std::string& term,
                                     double level = 0.95) {
  const auto it = std::find(fit.names.begin(), fit.names.end(), term);
  if (it == fit.names.end()) {
    throw schema_error("unknown model term '" + term + "'");
  }
  const auto j = static_cast<Eigen::Index>(it - fit.names.begin());
  const double b = fit.coefficients[j];
  const double var = fit.robust_covariance(j, j);
  const double se = std::sqrt(std::max(var, 0.0));
  const double z = normal_two_sided_z(level);
  EffectEstimate effect;
  effect.estimate = std::exp(b);
  effect.lcl = std::exp(b - z * se);
  effect.ucl = std::exp(b + z * se);
  effect.scale = Scale::HazardRatio;
  effect.outcome_common = false;
  return effect;
}

}  // namespace obsbias
