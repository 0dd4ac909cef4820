#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "obsbias/evalue.hpp"

using namespace obsbias;
using Catch::Approx;

TEST_CASE("orient folds bounds onto the >= 1 side", "[evalue]") {
  CHECK(orient(0.5) == Approx(2.0).epsilon(1e-14));
  CHECK(orient(1.0) == 1.0);
  CHECK(orient(1.11) == 1.11);
  CHECK_THROWS_AS(orient(0.0), domain_error);
  CHECK_THROWS_AS(orient(-2.0), domain_error);
  CHECK_THROWS_AS(orient(std::numeric_limits<double>::infinity()),
                  domain_error);
}

TEST_CASE("orient properties", "[evalue]") {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(gen);
    const double ox = orient(x);
    CHECK(ox >= 1.0);
    CHECK(orient(ox) == ox);
    CHECK(orient(1.0 / x) == Approx(ox).epsilon(1e-12));
  }
}

TEST_CASE("risk-ratio scale transforms", "[evalue]") {
  // Identity cases.
  CHECK(to_risk_ratio_scale(1.7, Scale::RiskRatio, true) == 1.7);
  CHECK(to_risk_ratio_scale(1.7, Scale::OddsRatio, false) == 1.7);
  CHECK(to_risk_ratio_scale(1.7, Scale::HazardRatio, false) == 1.7);
  // Square root for a common-outcome odds ratio.
  CHECK(to_risk_ratio_scale(4.0, Scale::OddsRatio, true) ==
        Approx(2.0).epsilon(1e-14));
  // Hazard-ratio limiting-bound transform maps 1 to 1 and 1.11 to
  // 1.07500766 (high-precision evaluation of the closed form).
  CHECK(to_risk_ratio_scale(1.0, Scale::HazardRatio, true) ==
        Approx(1.0).margin(1e-14));
  CHECK(to_risk_ratio_scale(1.11, Scale::HazardRatio, true) ==
        Approx(1.0750076592279123).margin(1e-12));
  CHECK_THROWS_AS(to_risk_ratio_scale(0.0, Scale::RiskRatio, false),
                  domain_error);
}

TEST_CASE("transforms are strictly increasing and fix 1", "[evalue]") {
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> u(0.05, 20.0);
  for (Scale scale :
       {Scale::RiskRatio, Scale::OddsRatio, Scale::HazardRatio}) {
    for (bool common : {false, true}) {
      CHECK(to_risk_ratio_scale(1.0, scale, common) ==
            Approx(1.0).margin(1e-14));
      for (int i = 0; i < 300; ++i) {
        double a = u(gen), b = u(gen);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        CHECK(to_risk_ratio_scale(a, scale, common) <
              to_risk_ratio_scale(b, scale, common));
      }
    }
  }
}

TEST_CASE("evalue anchors", "[evalue]") {
  // A bound already at the null needs no confounding at all.
  EffectEstimate at_null{1.2, 1.0, 1.4, Scale::RiskRatio, false};
  CHECK(evalue(at_null).evalue_ci == 1.0);

  // Common-outcome hazard ratio 1.24 (1.11, 1.37): E-value 1.36.
  EffectEstimate hr{1.24, 1.11, 1.37, Scale::HazardRatio, true};
  const auto res = evalue(hr);
  CHECK(res.evalue_ci == Approx(1.3589685864181915).margin(1e-9));
  CHECK(res.evalue_ci == Approx(1.36).margin(0.005));

  // Risk-ratio limiting bound 2: 2 + sqrt(2).
  CHECK(evalue_of_bound(2.0) ==
        Approx(2.0 + std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("evalue handles protective effects via orientation", "[evalue]") {
  EffectEstimate protective{0.5, 0.4, 0.9, Scale::RiskRatio, false};
  const auto res = evalue(protective);
  // Limiting bound is the ucl 0.9 -> oriented 1/0.9.
  const double expect = evalue_of_bound(1.0 / 0.9);
  CHECK(res.evalue_ci == Approx(expect).epsilon(1e-12));
  CHECK(res.evalue_point == Approx(evalue_of_bound(2.0)).epsilon(1e-12));
}

TEST_CASE("evalue of a bound dominates the bound", "[evalue]") {
  std::mt19937 gen(13);
  std::uniform_real_distribution<double> u(1.0, 50.0);
  CHECK(evalue_of_bound(1.0) == 1.0);
  for (int i = 0; i < 500; ++i) {
    const double b = u(gen);
    const double e = evalue_of_bound(b);
    CHECK(e >= b);
    if (b > 1.0) CHECK(e > b);
  }
  CHECK_THROWS_AS(evalue_of_bound(0.9), domain_error);
}

TEST_CASE("observed covariate e-value anchors", "[evalue]") {
  // Appendix anchor: dnr1 drop on the RHC example.
  CHECK(observed_covariate_evalue(1.11, 1.37, 1.00, 1.23,
                                  Scale::HazardRatio, true) ==
        Approx(1.358969).margin(1e-5));
  // Identical intervals: nothing moved.
  CHECK(observed_covariate_evalue(1.11, 1.37, 1.11, 1.37,
                                  Scale::HazardRatio, true) == 1.0);
  // Rare-outcome risk ratio: ratio 4/3, E = 4/3 + 2/3 = 2 exactly.
  CHECK(observed_covariate_evalue(2.0, 3.0, 1.5, 3.0, Scale::RiskRatio,
                                  false) == Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(observed_covariate_evalue(0.0, 1.0, 1.0, 1.0,
                                            Scale::RiskRatio, false),
                  domain_error);
}

TEST_CASE("observed covariate e-value symmetry and tip-at-null",
          "[evalue]") {
  std::mt19937 gen(17);
  std::uniform_real_distribution<double> u(1.0, 4.0);
  for (int i = 0; i < 300; ++i) {
    // Both intervals significant on the same side: swapping the roles of
    // the selected bounds cannot change the answer.
    const double lb = 1.0 + u(gen), lb_adj = 1.0 + u(gen);
    const double ub = lb + u(gen), ub_adj = lb_adj + u(gen);
    for (bool common : {false, true}) {
      const double a = observed_covariate_evalue(
          lb, ub, lb_adj, ub_adj, Scale::HazardRatio, common);
      const double b = observed_covariate_evalue(
          lb_adj, ub_adj, lb, ub, Scale::HazardRatio, common);
      CHECK(a == Approx(b).epsilon(1e-12));
    }
    // Tip at null on the risk-ratio scale reproduces the plain E-value.
    CHECK(observed_covariate_evalue(lb, ub, 1.0, ub_adj, Scale::RiskRatio,
                                    false) ==
          Approx(evalue_of_bound(lb)).margin(1e-12));
  }
}

TEST_CASE("observed covariate e-value with a spanning full interval",
          "[evalue]") {
  // Full interval spans 1: the side whose bound sits closer to the null
  // after orientation is used (here the lower side, 1/0.95 < 1.30).
  const double spanning = observed_covariate_evalue(
      0.95, 1.30, 0.90, 1.25, Scale::RiskRatio, false);
  const double expect = evalue_of_bound(0.95 / 0.90);
  CHECK(spanning == Approx(expect).epsilon(1e-12));
}

TEST_CASE("lin adjustment", "[evalue]") {
  TipParameters balanced{2.0, 3.0, 0.4, 0.4};
  CHECK(lin_adjust(1.7, balanced) == Approx(1.7).epsilon(1e-14));
  TipParameters unrelated{2.0, 1.0, 0.1, 0.9};
  CHECK(lin_adjust(1.7, unrelated) == Approx(1.7).epsilon(1e-14));
  // Cornfield-style smoking example: fully explained away.
  TipParameters cornfield{9.0, 9.0, 0.0, 1.0};
  CHECK(lin_adjust(9.0, cornfield) == Approx(1.0).margin(1e-12));
}

TEST_CASE("lin adjustment monotonicity", "[evalue]") {
  std::mt19937 gen(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> rr(1.5, 8.0);
  for (int i = 0; i < 300; ++i) {
    TipParameters p{2.0, rr(gen), u(gen), u(gen)};
    const double base = lin_adjust(2.0, p);
    TipParameters higher_p1 = p;
    higher_p1.p1 = std::min(1.0, p.p1 + 0.1);
    TipParameters higher_p0 = p;
    higher_p0.p0 = std::min(1.0, p.p0 + 0.1);
    CHECK(lin_adjust(2.0, higher_p1) <= base + 1e-12);
    CHECK(lin_adjust(2.0, higher_p0) >= base - 1e-12);
  }
}

TEST_CASE("tipping association", "[evalue]") {
  CHECK(tip_rr_ud(2.0, 4.0) == Approx(3.0).epsilon(1e-14));
  // Nothing to explain away as the bound approaches the null.
  CHECK(tip_rr_ud(1.0 + 1e-12, 3.0) == Approx(1.0).margin(1e-9));
  CHECK_THROWS_WITH(tip_rr_ud(2.0, 1.5),
                    Catch::Matchers::ContainsSubstring(
                        "no finite tipping association"));
  CHECK_THROWS_AS(tip_rr_ud(0.5, 3.0), domain_error);
}

// Substitute the solution back into the tipping condition:
// LB * (RR_UD/RR_EU + 1 - 1/RR_EU) / RR_UD must return 1.
static double tip_condition(double lb, double rr_eu, double rr_ud) {
  return lb * (rr_ud / rr_eu + 1.0 - 1.0 / rr_eu) / rr_ud;
}

TEST_CASE("e-value is the tipping fixed point", "[evalue]") {
  for (int i = 0; i < 50; ++i) {
    const double lb = 1.01 + (10.0 - 1.01) * i / 49.0;
    const double e = evalue_of_bound(lb);
    const double rr_ud = tip_rr_ud(lb, e);
    CHECK(rr_ud == Approx(e).margin(1e-9));
    CHECK(tip_condition(lb, e, rr_ud) == Approx(1.0).margin(1e-12));
  }
  // And at a non-fixed point the condition still closes.
  const double rr_ud = tip_rr_ud(2.0, 4.0);
  CHECK(tip_condition(2.0, 4.0, rr_ud) == Approx(1.0).margin(1e-12));
}

TEST_CASE("effect estimate validation", "[evalue]") {
  EffectEstimate bad{1.0, 1.2, 1.4, Scale::RiskRatio, false};
  CHECK_THROWS_AS(evalue(bad), domain_error);
  EffectEstimate nonpositive{1.0, -0.5, 1.4, Scale::RiskRatio, false};
  CHECK_THROWS_AS(evalue(nonpositive), domain_error);
}
