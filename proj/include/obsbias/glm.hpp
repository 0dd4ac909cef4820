#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "obsbias/error.hpp"
#include "obsbias/stats.hpp"

namespace obsbias {

/// Column-named design matrix with a binary response.
struct DesignMatrix {
  std::vector<std::string> names;  // one per column of X
  Eigen::MatrixXd X;               // n x p
  Eigen::VectorXd y;               // length n, values in {0, 1}

  void validate() const {
    const auto n = X.rows();
    const auto p = X.cols();
    if (p < 1 || static_cast<std::size_t>(p) != names.size()) {
      throw schema_error("design matrix columns and names disagree");
    }
    if (y.size() != n) {
      throw schema_error("response length does not match design rows");
    }
    if (n < p) {
      throw domain_error("design matrix needs at least as many rows as "
                         "columns");
    }
    if (!X.allFinite()) {
      throw domain_error("design matrix contains non-finite values");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (y[i] != 0.0 && y[i] != 1.0) {
        throw domain_error("response must be binary {0, 1}; row " +
                           std::to_string(i + 1) + " is " +
                           std::to_string(y[i]));
      }
    }
  }
};

struct GlmFit {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;  // log-odds units
  Eigen::MatrixXd covariance;    // inverse Fisher information
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separation_warning = false;
};

namespace detail {

constexpr double kProbClamp = 1e-10;

inline double clamp_probability(double p) {
  if (p < kProbClamp) return kProbClamp;
  if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
  return p;
}

inline double binomial_deviance(const Eigen::VectorXd& y,
                                const Eigen::VectorXd& p) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double pi = clamp_probability(p[i]);
    ll += y[i] * std::log(pi) + (1.0 - y[i]) * std::log1p(-pi);
  }
  return -2.0 * ll;
}

/// Name the first column the pivoted QR could not include in the basis.
[[noreturn]] inline void throw_rank_deficiency(
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
    const std::vector<std::string>& names) {
  const auto rank = qr.rank();
  const auto perm = qr.colsPermutation().indices();
  const auto offending = static_cast<std::size_t>(perm[rank]);
  throw fit_error("rank-deficient design: column '" + names[offending] +
                  "' is collinear with the others");
}

}  // namespace detail

/// Maximum-likelihood logistic regression via iteratively reweighted
/// least squares. Deterministic: starts at zero coefficients, weighted
/// QR solve per iteration, step-halving on deviance increase.
inline GlmFit fit_logistic(const DesignMatrix& design) {
  design.validate();
  const Eigen::Index n = design.X.rows();
  const Eigen::Index p = design.X.cols();
  constexpr int kMaxIter = 25;
  constexpr double kDevTol = 1e-8;
  // Absolute score plateaus around 1e-7 on large designs once the
  // deviance has stabilized; 1e-6 is the guaranteed bound on converged
  // fits.
  constexpr double kScoreTol = 1e-6;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd prob = Eigen::VectorXd::Constant(n, 0.5);
  double deviance = detail::binomial_deviance(design.y, prob);

  GlmFit fit;
  fit.names = design.names;
  Eigen::VectorXd sqw(n), z(n);
  double last_change = 0.0;
  double score_max = 0.0;

  for (int iter = 1; iter <= kMaxIter; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pi = detail::clamp_probability(prob[i]);
      sqw[i] = std::sqrt(pi * (1.0 - pi));
      z[i] = design.y[i] - pi;  // working residual
    }
    Eigen::MatrixXd A = sqw.asDiagonal() * design.X;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < p) {
      detail::throw_rank_deficiency(qr, design.names);
    }
    // Newton increment on the score: solving for the step directly
    // keeps the score near machine zero at the fixed point.
    const Eigen::VectorXd score = design.X.transpose() * z;
    Eigen::VectorXd direction =
        (A.transpose() * A).ldlt().solve(score);

    // Step-halving with slack scaled to the deviance magnitude (its
    // evaluation noise grows with n).
    const double slack = 1e-11 * std::max(1.0, std::fabs(deviance));
    double new_deviance = 0.0;
    Eigen::VectorXd candidate, cand_eta, cand_prob(n);
    bool accepted = false;
    for (int half = 0; half < 30; ++half) {
      candidate = beta + direction;
      cand_eta = design.X * candidate;
      for (Eigen::Index i = 0; i < n; ++i) {
        cand_prob[i] = inverse_logit(cand_eta[i]);
      }
      new_deviance = detail::binomial_deviance(design.y, cand_prob);
      if (new_deviance <= deviance + slack) {
        accepted = true;
        break;
      }
      direction *= 0.5;
    }
    if (!accepted) {
      throw fit_error("logistic fit failed: deviance could not be reduced "
                      "at iteration " + std::to_string(iter));
    }

    const double step_norm = direction.cwiseAbs().maxCoeff();
    beta = candidate;
    eta = cand_eta;
    prob = cand_prob;
    last_change = std::fabs(deviance - new_deviance);
    deviance = new_deviance;
    fit.iterations = iter;

    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      resid[i] = design.y[i] - detail::clamp_probability(prob[i]);
    }
    score_max = (design.X.transpose() * resid).cwiseAbs().maxCoeff();
    if (last_change < kDevTol && score_max < kScoreTol) {
      fit.converged = true;
      // Polish toward the arithmetic floor so downstream exact-balance
      // identities hold as tightly as the data allows.
      if (score_max < 1e-8 || step_norm < 1e-13) {
        break;
      }
    }
  }

  if (!fit.converged) {
    std::ostringstream msg;
    msg << "logistic fit did not converge after " << fit.iterations
        << " iterations (|d deviance| = " << last_change
        << ", max |score| = " << score_max << ")";
    throw fit_error(msg.str());
  }

  fit.coefficients = beta;
  fit.deviance = deviance;
  // Separation shows up either as a runaway linear predictor or as
  // fitted probabilities pinned at the clamp boundary (the clamp caps
  // |eta| effects near logit(1e-10) ~ 23, short of the 30 mark).
  bool saturated = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (prob[i] <= detail::kProbClamp ||
        prob[i] >= 1.0 - detail::kProbClamp) {
      saturated = true;
      break;
    }
  }
  fit.separation_warning = saturated || eta.cwiseAbs().maxCoeff() > 30.0;

  // Covariance = inverse Fisher information at the solution.
  Eigen::MatrixXd info(p, p);
  {
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pi = detail::clamp_probability(prob[i]);
      w[i] = pi * (1.0 - pi);
    }
    info = design.X.transpose() * w.asDiagonal() * design.X;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() <= 0.0) {
    throw fit_error("information matrix numerically singular"
                    " (complete separation?)");
  }
  Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = 0.5 * (cov + cov.transpose());
  return fit;
}

/// Fitted probabilities for a design with the same column layout as the
/// fit. Values are clamped to stay strictly inside (0, 1).
inline Eigen::VectorXd predict_probabilities(const GlmFit& fit,
                                             const DesignMatrix& design) {
  if (design.names != fit.names) {
    throw schema_error("design columns do not match fitted coefficients");
  }
  Eigen::VectorXd eta = design.X * fit.coefficients;
  Eigen::VectorXd prob(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    prob[i] = detail::clamp_probability(inverse_logit(eta[i]));
  }
  return prob;
}

}  // namespace obsbias
