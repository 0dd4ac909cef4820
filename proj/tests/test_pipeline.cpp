#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "obsbias/pipeline.hpp"
#include "obsbias/synth.hpp"

using namespace obsbias;
using Catch::Approx;

namespace {

Dataset confounded_data(int n, unsigned seed) {
  SynthSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.confounders = {{"u1", 0.9, 0.7}, {"u2", -0.5, 0.4}};
  spec.null_covariates = 1;
  spec.exposure_loghr = 0.35;
  spec.baseline_hazard = 0.12;
  spec.censor_time = 8.0;
  return generate(spec);
}

AnalysisConfig base_config() {
  AnalysisConfig cfg;
  cfg.exposure = "exposure";
  cfg.time = "time";
  cfg.event = "event";
  cfg.covariates = {"u1", "u2", "null_1"};
  cfg.outcome_common = true;
  return cfg;
}

}  // namespace

TEST_CASE("overlap weights", "[pipeline]") {
  const std::vector<double> p = {0.5, 0.8, 0.3};
  const std::vector<double> z = {0.0, 1.0, 1.0};
  const auto w = overlap_weights(p, z);
  CHECK(w[0] == 0.5);  // p = 0.5: weight one half in either arm
  CHECK(w[1] == Approx(0.2).epsilon(1e-15));
  CHECK(w[2] == Approx(0.7).epsilon(1e-15));

  CHECK_THROWS_AS(overlap_weights(std::vector<double>{1.0},
                                  std::vector<double>{1.0}),
                  domain_error);
  CHECK_THROWS_AS(overlap_weights(std::vector<double>{0.4},
                                  std::vector<double>{2.0}),
                  domain_error);
}

TEST_CASE("standardized mean difference", "[pipeline]") {
  // Arms with means 1 and 0 and unit variances: SMD exactly 1.
  const std::vector<double> x = {0, 1, 2, -1, 0, 1};
  const std::vector<double> z = {1, 1, 1, 0, 0, 0};
  CHECK(standardized_mean_difference(x, z) == Approx(1.0).epsilon(1e-14));

  // Identical arms: zero.
  const std::vector<double> same = {1, 2, 3, 1, 2, 3};
  CHECK(standardized_mean_difference(same, z) ==
        Approx(0.0).margin(1e-15));

  // Constant covariate: undefined.
  const std::vector<double> flat = {2, 2, 2, 2, 2, 2};
  CHECK_THROWS_WITH(standardized_mean_difference(flat, z),
                    Catch::Matchers::ContainsSubstring("undefined SMD"));

  // One empty arm.
  const std::vector<double> ones = {1, 1, 1, 1, 1, 1};
  CHECK_THROWS_AS(standardized_mean_difference(x, ones), domain_error);
}

TEST_CASE("overlap weights exactly balance modeled covariates",
          "[pipeline]") {
  const auto data = confounded_data(800, 3);
  const auto full = run_full_analysis(data, base_config());
  for (const auto& b : full.balance) {
    CHECK(std::fabs(b.smd_weighted) < 1e-6);
  }
  // The confounders start imbalanced, so the weighting did real work.
  CHECK(std::fabs(full.balance[0].smd_unweighted) > 0.1);
}

TEST_CASE("empty covariate list degenerates to an intercept-only PS",
          "[pipeline]") {
  const auto data = confounded_data(400, 5);
  auto cfg = base_config();
  cfg.covariates.clear();
  const auto full = run_full_analysis(data, cfg);
  REQUIRE(full.ps_fit.names ==
          std::vector<std::string>{"(Intercept)"});
  // Every propensity equals the exposure rate.
  const auto& z = data.column("exposure");
  const double rate =
      std::accumulate(z.begin(), z.end(), 0.0) / z.size();
  for (double p : full.propensity) {
    CHECK(p == Approx(rate).margin(1e-8));
  }
  CHECK(full.balance.empty());
  CHECK(full.full.estimate > 0.0);
}

TEST_CASE("full analysis validates inputs", "[pipeline]") {
  const auto data = confounded_data(100, 7);
  auto cfg = base_config();
  cfg.covariates = {"u1", "not_a_column"};
  CHECK_THROWS_AS(run_full_analysis(data, cfg), schema_error);

  auto with_nan = data;
  with_nan.columns[3][4] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(run_full_analysis(with_nan, base_config()),
                    Catch::Matchers::ContainsSubstring("complete cases"));
}

TEST_CASE("observed bias records and their OCE column", "[pipeline]") {
  const auto data = confounded_data(1200, 11);
  auto cfg = base_config();
  cfg.groups = {{"both confounders", {"u1", "u2"}}};
  const auto records = run_observed_bias(data, cfg, 1);

  REQUIRE(records.size() == 1 + 3 + 1);  // full + covariates + group
  CHECK(records[0].kind == RecordKind::Full);
  CHECK(std::isnan(records[0].oce));
  CHECK(records[1].label == "u1");
  CHECK(records[4].kind == RecordKind::Group);
  CHECK(records[4].label == "both confounders");

  // Recomputing each OCE from stored bounds reproduces it bit for bit.
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    REQUIRE(!r.failed());
    const double again = observed_covariate_evalue(
        records[0].lcl, records[0].ucl, r.lcl, r.ucl, Scale::HazardRatio,
        cfg.outcome_common);
    CHECK(again == r.oce);
  }

  // The planted confounder u1 moves the estimate; the null covariate
  // barely does.
  const auto find = [&](const std::string& label) {
    return *std::find_if(records.begin(), records.end(),
                         [&](const auto& r) { return r.label == label; });
  };
  CHECK(find("null_1").oce < 1.05);
  CHECK(std::fabs(find("null_1").estimate - records[0].estimate) < 0.01);
  CHECK(find("u1").oce > find("null_1").oce);
}

TEST_CASE("drop plan execution is order- and worker-invariant",
          "[pipeline]") {
  const auto data = confounded_data(600, 13);
  auto cfg = base_config();
  cfg.groups = {{"pair", {"u1", "null_1"}}};
  const auto full = run_full_analysis(data, cfg);
  auto plan = build_drop_plan(cfg);

  const auto base = run_observed_bias(data, cfg, full, plan, 1);
  const auto parallel = run_observed_bias(data, cfg, full, plan, 4);
  REQUIRE(base.size() == parallel.size());
  const auto same = [](double a, double b) {
    return (std::isnan(a) && std::isnan(b)) || a == b;  // bitwise
  };
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i].label == parallel[i].label);
    CHECK(same(base[i].estimate, parallel[i].estimate));
    CHECK(same(base[i].oce, parallel[i].oce));
  }

  // Permuted plan: same records, different order.
  auto shuffled = plan;
  std::reverse(shuffled.begin(), shuffled.end());
  auto from_shuffled = run_observed_bias(data, cfg, full, shuffled, 2);
  const auto by_label = [](const ObservedBiasRecord& a,
                           const ObservedBiasRecord& b) {
    return a.label < b.label;
  };
  auto sorted_base = base;
  std::sort(sorted_base.begin(), sorted_base.end(), by_label);
  std::sort(from_shuffled.begin(), from_shuffled.end(), by_label);
  for (std::size_t i = 0; i < sorted_base.size(); ++i) {
    CHECK(sorted_base[i].label == from_shuffled[i].label);
    CHECK(sorted_base[i].estimate == from_shuffled[i].estimate);
  }
}

TEST_CASE("a failing plan entry is flagged, not fatal", "[pipeline]") {
  const auto data = confounded_data(300, 17);
  const auto cfg = base_config();
  const auto full = run_full_analysis(data, cfg);
  std::vector<DropEntry> plan = {
      {"fine", RecordKind::Covariate, {"u1"}},
      {"broken", RecordKind::Covariate, {"u2", "u2"}},  // collinear
  };
  const auto records = run_observed_bias(data, cfg, full, plan, 2);
  REQUIRE(records.size() == 3);
  CHECK(!records[1].failed());
  CHECK(records[2].failed());
  CHECK(records[2].error.find("propensity model") != std::string::npos);
  CHECK(std::isnan(records[2].estimate));
}

TEST_CASE("tip rows divide the full triple by the tip value",
          "[pipeline]") {
  ObservedBiasRecord full;
  full.label = "Full Model";
  full.kind = RecordKind::Full;
  full.estimate = 1.24;
  full.lcl = 1.11;
  full.ucl = 1.37;

  auto cfg = base_config();
  cfg.outcome_common = false;  // hazard ratio treated as rare: identity
  const auto [tip_lb, tip_point] = tip_rows(full, cfg);

  CHECK(tip_lb.kind == RecordKind::Tip);
  CHECK(tip_lb.lcl == 1.0);  // exact by construction
  CHECK(tip_lb.estimate == Approx(1.24 / 1.11).epsilon(1e-14));
  CHECK(tip_lb.ucl == Approx(1.37 / 1.11).epsilon(1e-14));

  // On the identity scale the Tip LB row's OCE is the plain E-value of
  // the limiting bound, exactly.
  EffectEstimate effect{1.24, 1.11, 1.37, Scale::RiskRatio, false};
  CHECK(tip_lb.oce == Approx(evalue(effect).evalue_ci).margin(1e-12));

  CHECK(tip_point.estimate == Approx(1.0).epsilon(1e-14));
  CHECK(tip_point.lcl == Approx(1.11 / 1.24).epsilon(1e-14));
  // Dividing by the point estimate makes the OCE the point-estimate
  // E-value on the identity scale.
  CHECK(tip_point.oce ==
        Approx(evalue(effect).evalue_point).margin(1e-12));

  // Common-outcome hazard ratio: the paper's E-value of 1.36.
  auto cfg_hr = base_config();
  const auto tip_lb_hr = tip_rows(full, cfg_hr).first;
  CHECK(tip_lb_hr.oce == Approx(1.3589685864181915).margin(1e-9));
}

TEST_CASE("record ordering", "[pipeline]") {
  std::vector<ObservedBiasRecord> records(4);
  records[0] = {"c", RecordKind::Covariate, 1.30, 1.20, 1.40, 1.5, ""};
  records[1] = {"a", RecordKind::Covariate, 1.10, 1.05, 1.15, 1.2, ""};
  records[2] = {"b", RecordKind::Tip, 1.10, 1.05, 1.15, 1.2, ""};
  records[3] = {"Full Model", RecordKind::Full, 1.2, 1.1, 1.3,
                std::numeric_limits<double>::quiet_NaN(), ""};

  const auto by_lcl = order_records(records, "lcl");
  CHECK(by_lcl[0].label == "a");  // ties on lcl=1.05 break by label
  CHECK(by_lcl[1].label == "b");
  CHECK(by_lcl[2].label == "Full Model");
  CHECK(by_lcl[3].label == "c");

  // Already sorted input is unchanged.
  const auto again = order_records(by_lcl, "lcl");
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].label == by_lcl[i].label);
  }

  // Sorting by oce treats the full record as 1.
  const auto by_oce = order_records(records, "oce");
  CHECK(by_oce[0].label == "Full Model");

  // Failed records sort last.
  records[1].error = "boom";
  records[1].lcl = std::numeric_limits<double>::quiet_NaN();
  const auto with_failed = order_records(records, "lcl");
  CHECK(with_failed[3].label == "a");

  CHECK_THROWS_AS(order_records(records, "banana"), schema_error);
}
