// Command-line front end: E-value calculators, the observed-bias
// pipeline, synthetic data generation, and figure emission.
//
// Exit codes: 0 success, 2 validation error, 3 computation failure.
// Results go to stdout as one JSON object; diagnostics go to stderr.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "obsbias/obsbias.hpp"

namespace {

std::string num(double v) { return obsbias::detail::canonical_number(v); }

std::string jstr(const std::string& s) {
  std::string out;
  obsbias::detail::json_escape(s, out);
  return out;
}

void print_json_line(const std::string& body) {
  std::cout << body << "\n";
}

std::string record_json(const obsbias::ObservedBiasRecord& rec) {
  std::string out;
  obsbias::detail::json_record(rec, out);
  return out;
}

int resolve_workers(int cli_value) {
  if (cli_value > 0) return cli_value;
  if (const char* env = std::getenv("OBSBIAS_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

struct AnalyzeArgs {
  std::string data_path;
  std::string config_path;
  std::string preset;
  std::string out_path;
  std::string plot_path;
  std::string love_path;
  std::string theme_path;
  std::string order_by = "lcl";
  int workers = 0;
  bool pretty = false;
};

void print_records_table(const std::vector<obsbias::ObservedBiasRecord>& recs) {
  std::printf("%-56s %-9s %9s %9s %9s %9s\n", "label", "kind", "estimate",
              "lcl", "ucl", "oce");
  for (const auto& r : recs) {
    if (r.failed()) {
      std::printf("%-56s %-9s fit failed: %s\n", r.label.c_str(),
                  obsbias::to_string(r.kind).c_str(), r.error.c_str());
      continue;
    }
    std::printf("%-56s %-9s %9.3f %9.3f %9.3f %9s\n", r.label.c_str(),
                obsbias::to_string(r.kind).c_str(), r.estimate, r.lcl,
                r.ucl, std::isnan(r.oce) ? "" : num(r.oce).c_str());
  }
}

int run_analyze(const AnalyzeArgs& args) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  std::string digest;
  obsbias::Dataset data = obsbias::read_csv(args.data_path, &digest);

  obsbias::AnalysisConfig config;
  if (!args.preset.empty()) {
    const auto preset = obsbias::find_preset(args.preset);
    obsbias::apply_renames(data, preset.renames);
    config = preset.config;
  }
  if (!args.config_path.empty()) {
    config = obsbias::read_config(args.config_path);
  } else if (args.preset.empty()) {
    throw obsbias::schema_error("analyze needs --config or --preset");
  }

  // Complete cases over the model columns only.
  obsbias::MissingReport missing;
  std::vector<std::string> used = {config.exposure, config.time,
                                   config.event};
  used.insert(used.end(), config.covariates.begin(),
              config.covariates.end());
  data = obsbias::complete_cases(data, used, &missing);
  if (missing.rows_dropped > 0) {
    std::cerr << "note: dropped " << missing.rows_dropped
              << " rows with missing values (kept " << missing.rows_kept
              << ")\n";
    for (const auto& [col, count] : missing.missing_by_column) {
      std::cerr << "note:   " << col << ": " << count << " missing\n";
    }
  }

  const int workers = resolve_workers(args.workers);
  const auto full = obsbias::run_full_analysis(data, config);
  auto records = obsbias::run_observed_bias(
      data, config, full, obsbias::build_drop_plan(config), workers);
  const auto tips = obsbias::tip_rows(full.full, config);
  records.push_back(tips.first);
  records.push_back(tips.second);
  records = obsbias::order_records(std::move(records), args.order_by);

  obsbias::RunArtifact artifact;
  artifact.config = config;
  artifact.full = full.full;
  artifact.records = records;
  artifact.balance = full.balance;
  artifact.input_digest = digest;
  obsbias::write_results(artifact, args.out_path);

  obsbias::PlotTheme theme;
  if (!args.theme_path.empty()) {
    theme = obsbias::read_theme(args.theme_path);
  }
  if (!args.plot_path.empty()) {
    obsbias::write_text_file(
        obsbias::observed_bias_plot(records, full.full, theme),
        args.plot_path);
  }
  if (!args.love_path.empty()) {
    obsbias::write_text_file(obsbias::love_plot(full.balance, theme),
                             args.love_path);
  }

  const double wall =
      std::chrono::duration<double>(clock::now() - t0).count();
  std::cerr << "note: analysis finished in " << wall << " s ("
            << workers << " worker" << (workers == 1 ? "" : "s") << ")\n";

  if (args.pretty) {
    print_records_table(records);
  } else {
    print_json_line("{\"full\":" + record_json(full.full) +
                    ",\"out\":" + jstr(args.out_path) + ",\"records\":" +
                    std::to_string(records.size()) + "}");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Observed-bias and E-value sensitivity analysis toolkit"};
  app.require_subcommand(1);

  // --- evalue ---------------------------------------------------------
  double ev_estimate = 0.0, ev_lcl = 0.0, ev_ucl = 0.0;
  std::string ev_scale = "rr";
  bool ev_common = false, ev_pretty = false;
  auto* cmd_evalue =
      app.add_subcommand("evalue", "E-values for an effect estimate");
  cmd_evalue->add_option("--estimate", ev_estimate, "Point estimate")
      ->required();
  cmd_evalue->add_option("--lcl", ev_lcl, "Lower confidence limit")
      ->required();
  cmd_evalue->add_option("--ucl", ev_ucl, "Upper confidence limit")
      ->required();
  cmd_evalue->add_option("--scale", ev_scale, "Scale: rr, or, hr");
  cmd_evalue->add_flag("--common-outcome", ev_common,
                       "Outcome is common (not rare)");
  cmd_evalue->add_flag("--pretty", ev_pretty, "Human-readable output");

  // --- oce ------------------------------------------------------------
  double oce_lb = 0.0, oce_ub = 0.0, oce_lb_adj = 0.0, oce_ub_adj = 0.0;
  std::string oce_scale = "rr";
  bool oce_common = false, oce_pretty = false;
  auto* cmd_oce = app.add_subcommand(
      "oce", "Observed Covariate E-value for a pair of intervals");
  cmd_oce->add_option("--lb", oce_lb, "Full-model lower bound")->required();
  cmd_oce->add_option("--ub", oce_ub, "Full-model upper bound")->required();
  cmd_oce->add_option("--lb-adj", oce_lb_adj, "Adjusted lower bound")
      ->required();
  cmd_oce->add_option("--ub-adj", oce_ub_adj, "Adjusted upper bound")
      ->required();
  cmd_oce->add_option("--scale", oce_scale, "Scale: rr, or, hr");
  cmd_oce->add_flag("--common-outcome", oce_common,
                    "Outcome is common (not rare)");
  cmd_oce->add_flag("--pretty", oce_pretty, "Human-readable output");

  // --- tip ------------------------------------------------------------
  double tip_lb = 0.0, tip_rr_eu = 0.0;
  bool tip_pretty = false;
  auto* cmd_tip = app.add_subcommand(
      "tip", "Confounder-outcome association that tips a limiting bound");
  cmd_tip->add_option("--lb", tip_lb, "Limiting bound (>= 1)")->required();
  cmd_tip->add_option("--rr-eu", tip_rr_eu,
                      "Confounder-exposure association (> limiting bound)")
      ->required();
  cmd_tip->add_flag("--pretty", tip_pretty, "Human-readable output");

  // --- synth ----------------------------------------------------------
  std::string synth_spec_path, synth_out_path;
  auto* cmd_synth = app.add_subcommand(
      "synth", "Generate a synthetic observational dataset");
  cmd_synth->add_option("--spec", synth_spec_path, "Spec JSON path")
      ->required();
  cmd_synth->add_option("--out", synth_out_path, "Output CSV path")
      ->required();

  // --- analyze --------------------------------------------------------
  AnalyzeArgs analyze_args;
  auto* cmd_analyze = app.add_subcommand(
      "analyze", "Full observed-bias analysis: models, records, figures");
  cmd_analyze->add_option("--data", analyze_args.data_path, "Input CSV")
      ->required();
  cmd_analyze->add_option("--config", analyze_args.config_path,
                          "Analysis config JSON");
  cmd_analyze->add_option("--preset", analyze_args.preset,
                          "Named dataset preset (rhc)");
  cmd_analyze->add_option("--out", analyze_args.out_path,
                          "Results JSON path (records CSV lands beside it)")
      ->required();
  cmd_analyze->add_option("--plot", analyze_args.plot_path,
                          "Observed bias plot SVG path");
  cmd_analyze->add_option("--love", analyze_args.love_path,
                          "Love plot SVG path");
  cmd_analyze->add_option("--theme", analyze_args.theme_path,
                          "Theme overrides JSON");
  cmd_analyze->add_option("--order-by", analyze_args.order_by,
                          "Record ordering: estimate, lcl, ucl, oce");
  cmd_analyze->add_option("--workers", analyze_args.workers,
                          "Refit worker threads (or OBSBIAS_THREADS)");
  cmd_analyze->add_flag("--pretty", analyze_args.pretty,
                        "Human-readable record table on stdout");

  // --- plot -----------------------------------------------------------
  std::string plot_results, plot_out, plot_love, plot_theme;
  auto* cmd_plot = app.add_subcommand(
      "plot", "Re-emit figures from a results JSON");
  cmd_plot->add_option("--results", plot_results, "Results JSON path")
      ->required();
  cmd_plot->add_option("--plot", plot_out, "Observed bias plot SVG path");
  cmd_plot->add_option("--love", plot_love, "Love plot SVG path");
  cmd_plot->add_option("--theme", plot_theme, "Theme overrides JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_evalue->parsed()) {
      obsbias::EffectEstimate effect;
      effect.estimate = ev_estimate;
      effect.lcl = ev_lcl;
      effect.ucl = ev_ucl;
      effect.scale = obsbias::parse_scale(ev_scale);
      effect.outcome_common = ev_common;
      const auto result = obsbias::evalue(effect);
      if (ev_pretty) {
        std::printf("E-value (point estimate): %.6g\n", result.evalue_point);
        std::printf("E-value (confidence bound): %.6g\n", result.evalue_ci);
      } else {
        print_json_line("{\"evalue_ci\":" + num(result.evalue_ci) +
                        ",\"evalue_point\":" + num(result.evalue_point) +
                        "}");
      }
    } else if (cmd_oce->parsed()) {
      const double oce = obsbias::observed_covariate_evalue(
          oce_lb, oce_ub, oce_lb_adj, oce_ub_adj,
          obsbias::parse_scale(oce_scale), oce_common);
      if (oce_pretty) {
        std::printf("Observed Covariate E-value: %.6g\n", oce);
      } else {
        print_json_line("{\"oce\":" + num(oce) + "}");
      }
    } else if (cmd_tip->parsed()) {
      const double rr_ud = obsbias::tip_rr_ud(tip_lb, tip_rr_eu);
      if (tip_pretty) {
        std::printf("Tipping confounder-outcome association: %.6g\n",
                    rr_ud);
      } else {
        print_json_line("{\"rr_ud\":" + num(rr_ud) + "}");
      }
    } else if (cmd_synth->parsed()) {
      const auto spec = obsbias::read_synth_spec(synth_spec_path);
      const auto data = obsbias::generate(spec);
      obsbias::write_csv(data, synth_out_path);
      print_json_line("{\"out\":" + jstr(synth_out_path) + ",\"rows\":" +
                      std::to_string(data.n_rows()) + "}");
    } else if (cmd_analyze->parsed()) {
      return run_analyze(analyze_args);
    } else if (cmd_plot->parsed()) {
      const auto artifact = obsbias::read_results(plot_results);
      obsbias::PlotTheme theme;
      if (!plot_theme.empty()) theme = obsbias::read_theme(plot_theme);
      if (!plot_out.empty()) {
        obsbias::write_text_file(
            obsbias::observed_bias_plot(artifact.records, artifact.full,
                                        theme),
            plot_out);
      }
      if (!plot_love.empty()) {
        obsbias::write_text_file(
            obsbias::love_plot(artifact.balance, theme), plot_love);
      }
      print_json_line("{\"results\":" + jstr(plot_results) + "}");
    }
  } catch (const obsbias::fit_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const obsbias::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
