#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "obsbias/glm.hpp"

using namespace obsbias;
using Catch::Approx;

namespace {

// The 2x2 design from a closed-form odds-ratio table:
// x=1: 30 exposed / 10 unexposed; x=0: 10 exposed / 30 unexposed.
DesignMatrix two_by_two() {
  DesignMatrix d;
  d.names = {"(Intercept)", "x"};
  d.X.resize(80, 2);
  d.y.resize(80);
  int row = 0;
  const auto fill = [&](double x, double y, int count) {
    for (int i = 0; i < count; ++i, ++row) {
      d.X(row, 0) = 1.0;
      d.X(row, 1) = x;
      d.y(row) = y;
    }
  };
  fill(1.0, 1.0, 30);
  fill(1.0, 0.0, 10);
  fill(0.0, 1.0, 10);
  fill(0.0, 0.0, 30);
  return d;
}

DesignMatrix random_design(unsigned seed, int n, int p) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DesignMatrix d;
  d.names.push_back("(Intercept)");
  for (int j = 1; j < p; ++j) d.names.push_back("x" + std::to_string(j));
  d.X.resize(n, p);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    double eta = -0.2;
    for (int j = 1; j < p; ++j) {
      d.X(i, j) = z(gen);
      eta += 0.4 * d.X(i, j);
    }
    d.y(i) = u(gen) < inverse_logit(eta) ? 1.0 : 0.0;
  }
  return d;
}

}  // namespace

TEST_CASE("intercept-only fit recovers the logit of the mean", "[glm]") {
  DesignMatrix d;
  d.names = {"(Intercept)"};
  d.X = Eigen::MatrixXd::Ones(10, 1);
  d.y.resize(10);
  d.y << 1, 1, 1, 0, 0, 0, 0, 0, 0, 0;  // mean 0.3
  const auto fit = fit_logistic(d);
  CHECK(fit.converged);
  CHECK(fit.coefficients[0] == Approx(std::log(0.3 / 0.7)).margin(1e-8));
}

TEST_CASE("2x2 table matches the closed-form log odds ratio", "[glm]") {
  const auto fit = fit_logistic(two_by_two());
  CHECK(fit.coefficients[1] == Approx(std::log(9.0)).margin(1e-8));
  CHECK(fit.coefficients[0] == Approx(std::log(1.0 / 3.0)).margin(1e-8));

  // Saturated design: fitted probabilities equal the cell proportions.
  const auto prob = predict_probabilities(fit, two_by_two());
  CHECK(prob[0] == Approx(0.75).margin(1e-8));   // x = 1 rows
  CHECK(prob[79] == Approx(0.25).margin(1e-8));  // x = 0 rows
}

TEST_CASE("duplicated column raises a named rank error", "[glm]") {
  auto d = two_by_two();
  d.names.push_back("x_copy");
  d.X.conservativeResize(Eigen::NoChange, 3);
  d.X.col(2) = d.X.col(1);
  CHECK_THROWS_WITH(fit_logistic(d),
                    Catch::Matchers::ContainsSubstring("rank-deficient") &&
                        (Catch::Matchers::ContainsSubstring("x_copy") ||
                         Catch::Matchers::ContainsSubstring("'x'")));
}

TEST_CASE("score equations hold at the solution", "[glm]") {
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto d = random_design(seed, 300, 4);
    const auto fit = fit_logistic(d);
    REQUIRE(fit.converged);
    const Eigen::VectorXd p = predict_probabilities(fit, d);
    const Eigen::VectorXd score = d.X.transpose() * (d.y - p);
    CHECK(score.cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("refits are bit-for-bit deterministic", "[glm]") {
  const auto d = random_design(5, 200, 3);
  const auto a = fit_logistic(d);
  const auto b = fit_logistic(d);
  for (Eigen::Index j = 0; j < a.coefficients.size(); ++j) {
    CHECK(a.coefficients[j] == b.coefficients[j]);
  }
  CHECK(a.deviance == b.deviance);
}

TEST_CASE("column rescaling rescales the coefficient only", "[glm]") {
  const auto d = random_design(9, 250, 3);
  const auto base = fit_logistic(d);
  auto scaled = d;
  scaled.X.col(1) *= 10.0;
  const auto fit = fit_logistic(scaled);
  CHECK(fit.coefficients[1] == Approx(base.coefficients[1] / 10.0)
                                   .epsilon(1e-8));
  const Eigen::VectorXd pa = predict_probabilities(base, d);
  const Eigen::VectorXd pb = predict_probabilities(fit, scaled);
  CHECK((pa - pb).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("prediction contract", "[glm]") {
  GlmFit fit;
  fit.names = {"(Intercept)", "x"};
  fit.coefficients = Eigen::VectorXd::Zero(2);

  DesignMatrix d;
  d.names = fit.names;
  d.X.resize(3, 2);
  d.X << 1, -2, 1, 0, 1, 3;
  d.y = Eigen::VectorXd::Zero(3);

  // All-zero coefficients: every probability is one half.
  const auto p = predict_probabilities(fit, d);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p[i] == 0.5);

  // Saturating linear predictor stays strictly inside (0, 1).
  fit.coefficients << 0.0, 40.0;
  const auto ps = predict_probabilities(fit, d);
  CHECK(ps[2] < 1.0);
  CHECK(ps[2] > 0.999999);
  CHECK(ps[0] > 0.0);
  CHECK(ps[0] < 1e-6);

  // Mismatched columns are a schema error.
  DesignMatrix wrong = d;
  wrong.names = {"(Intercept)", "y"};
  CHECK_THROWS_AS(predict_probabilities(fit, wrong), schema_error);
}

TEST_CASE("complete separation flags a warning", "[glm]") {
  DesignMatrix d;
  d.names = {"(Intercept)", "x"};
  d.X.resize(20, 2);
  d.y.resize(20);
  for (int i = 0; i < 20; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = i < 10 ? -1.0 : 1.0;
    d.y(i) = i < 10 ? 0.0 : 1.0;
  }
  const auto fit = fit_logistic(d);
  CHECK(fit.separation_warning);
  CHECK(fit.deviance < 1e-4);
}

TEST_CASE("design validation", "[glm]") {
  DesignMatrix d;
  d.names = {"(Intercept)"};
  d.X = Eigen::MatrixXd::Ones(4, 1);
  d.y.resize(4);
  d.y << 0, 1, 2, 0;  // not binary
  CHECK_THROWS_AS(fit_logistic(d), domain_error);

  d.y.resize(3);
  d.y << 0, 1, 0;
  CHECK_THROWS_AS(fit_logistic(d), schema_error);
}
