// Command-line front end: fit / test / simulate / analyze.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "onearm/analysis.hpp"
#include "onearm/simulation.hpp"

namespace {

using namespace onearm;

constexpr int kExitOk = 0;
constexpr int kExitComputation = 1;
constexpr int kExitInput = 2;

void print_warnings(const WarningList& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

/// "family:p1[,p2]", e.g. exponential:0.35 or weibull:1.5,2
FittedModel parse_control_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw InvalidInput("control spec must look like family:param1[,param2]");
  const auto family = family_from_name(spec.substr(0, colon));
  if (!family)
    throw InvalidInput("unknown family '" + spec.substr(0, colon) + "'");
  std::vector<double> params;
  std::string rest = spec.substr(colon + 1);
  std::size_t pos = 0;
  while (pos != std::string::npos && params.size() < 3) {
    const auto comma = rest.find(',', pos);
    const std::string field = rest.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      params.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw InvalidInput("cannot parse control parameter '" + field + "'");
    }
    pos = comma == std::string::npos ? comma : comma + 1;
  }
  if (static_cast<int>(params.size()) != parameter_count(*family))
    throw InvalidInput(family_name(*family) + " needs " +
                       std::to_string(parameter_count(*family)) +
                       " parameter(s)");
  return FittedModel::from_params(*family, params[0],
                                  params.size() > 1 ? params[1] : 0.0);
}

std::vector<double> parse_pair_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos != std::string::npos) {
    const auto comma = text.find(',', pos);
    const std::string field = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      out.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw InvalidInput(std::string("cannot parse ") + what + " '" + field +
                         "'");
    }
    pos = comma == std::string::npos ? comma : comma + 1;
  }
  return out;
}

void write_or_print(const nlohmann::json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw InvalidInput("cannot open output file: " + out_path);
  out << j.dump(2) << '\n';
}

struct FitArgs {
  std::string ipd, out, csv;
};

int run_fit(const FitArgs& args) {
  WarningList warnings;
  const SurvivalSample sample = load_ipd(args.ipd);
  const auto fits = fit_all_families(sample, &warnings);
  print_warnings(warnings);
  std::printf("%-14s %-22s %12s %12s\n", "family", "params", "loglik", "aic");
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : fits) {
    char params[48];
    if (parameter_count(m.family) == 1)
      std::snprintf(params, sizeof(params), "%.6g", m.params[0]);
    else
      std::snprintf(params, sizeof(params), "%.6g, %.6g", m.params[0],
                    m.params[1]);
    std::printf("%-14s %-22s %12.4f %12.4f\n", family_name(m.family).c_str(),
                params, m.loglik, m.aic);
    rows.push_back({{"family", family_name(m.family)},
                    {"params", {m.params[0], m.params[1]}},
                    {"loglik", m.loglik},
                    {"aic", m.aic},
                    {"n", m.n_fit}});
  }
  if (!args.out.empty()) write_or_print(rows, args.out);
  if (!args.csv.empty()) {
    std::ofstream out(args.csv);
    if (!out) throw InvalidInput("cannot open output file: " + args.csv);
    out << "family,param1,param2,loglik,aic,n\n";
    for (const auto& m : fits) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%zu\n",
                    family_name(m.family).c_str(), m.params[0], m.params[1],
                    m.loglik, m.aic, m.n_fit);
      out << buf;
    }
  }
  return kExitOk;
}

struct TestArgs {
  std::string method, ipd, control_spec, control_ipd, family = "best", out;
  double k = 1.0, k1 = 0.0, k2 = 0.0, tau = 0.0, alpha = 0.05;
  std::string ee = "1,3", de = "3,5";
  std::uint64_t seed = 0;
  bool step_rmst = false;
};

struct ResolvedControl {
  FittedModel model;
  std::optional<double> max_time;
};

ResolvedControl resolve_control(const std::string& control_spec,
                                const std::string& control_ipd,
                                const std::string& family,
                                WarningList* warnings) {
  if (control_spec.empty() == control_ipd.empty())
    throw InvalidInput("give exactly one of --control or --control-ipd");
  if (!control_spec.empty()) return {parse_control_spec(control_spec), {}};
  const SurvivalSample ctl = load_ipd(control_ipd);
  if (family == "best")
    return {fit_all_families(ctl, warnings).front(), ctl.max_time()};
  const auto fam = family_from_name(family);
  if (!fam) throw InvalidInput("unknown family '" + family + "'");
  return {fit_mle(ctl, *fam, warnings), ctl.max_time()};
}

int run_test(const TestArgs& args) {
  WarningList warnings;
  const SurvivalSample sample = load_ipd(args.ipd);
  const ResolvedControl control =
      resolve_control(args.control_spec, args.control_ipd, args.family,
                      &warnings);
  nlohmann::json j;
  auto fill = [&](const TestOutcome& o) {
    j = {{"test", o.label},         {"statistic", o.statistic},
         {"p_one_sided", o.p_one_sided}, {"observed", o.observed},
         {"expected", o.expected},  {"alpha", o.alpha},
         {"reject", o.reject()}};
  };
  const std::string m = args.method;
  if (m == "oslrt") fill(onearm::oslrt(sample, control.model, args.alpha));
  else if (m == "moslrt") fill(moslrt(sample, control.model, args.alpha));
  else if (m == "early") fill(z_early(sample, control.model, args.k, args.alpha));
  else if (m == "middle")
    fill(z_middle(sample, control.model, args.k1, args.k2, args.alpha));
  else if (m == "delayed")
    fill(z_delayed(sample, control.model, args.k, args.alpha));
  else if (m == "crossing") fill(z_crossing(sample, control.model, args.alpha));
  else if (m == "rmst") {
    double tau = args.tau;
    if (tau <= 0.0) {
      if (!control.max_time)
        throw InvalidInput("rmst with a parametric control needs --tau");
      tau = select_tau(sample, *control.max_time);
    }
    fill(drmst_test(sample, control.model, tau, args.alpha,
                    args.step_rmst ? RmstIntegration::StepExact
                                   : RmstIntegration::Trapezoid,
                    &warnings));
    j["tau"] = tau;
  } else if (m == "maxcombo") {
    const ComboSpec spec = ComboSpec::with_change_points(
        parse_pair_list(args.ee, "--ee entry"),
        parse_pair_list(args.de, "--de entry"));
    MvnOptions mvn;
    mvn.seed = args.seed;
    const ComboResult combo =
        max_combo_test(sample, control.model, spec, mvn, args.alpha);
    for (const auto& w : combo.warnings) warnings.push_back(w);
    j["test"] = "maxcombo";
    j["statistic"] = combo.statistic;
    j["p_hochberg"] = combo.p_hochberg;
    j["p_exact"] = combo.p_exact;
    j["p_exact_se"] = combo.p_exact_se;
    j["alpha"] = args.alpha;
    j["reject_hochberg"] = combo.p_hochberg < args.alpha;
    j["reject_exact"] = combo.p_exact < args.alpha;
    nlohmann::json comps = nlohmann::json::array();
    for (std::size_t i = 0; i < combo.components.size(); ++i)
      comps.push_back({{"label", combo.components[i].label()},
                       {"statistic", combo.statistics[i]},
                       {"p", combo.p_values[i]}});
    j["components"] = comps;
  } else {
    throw InvalidInput("unknown --method '" + m + "'");
  }
  j["control"] = {{"family", family_name(control.model.family)},
                  {"params", {control.model.params[0], control.model.params[1]}}};
  print_warnings(warnings);
  write_or_print(j, args.out);
  return kExitOk;
}

struct SimulateArgs {
  std::string config, out_prefix = "study_results";
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned workers = 0;
};

int run_simulate(const SimulateArgs& args) {
  std::ifstream in(args.config);
  if (!in) throw InvalidInput("cannot open config file: " + args.config);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("config is not valid JSON: ") + e.what());
  }
  const StudyDefinition def = study_from_json(j);
  const SimulationReport report = run_any_study(def, args.seed, args.workers);
  print_warnings(report.warnings);
  write_report_csv(report, args.out_prefix + ".csv");
  write_report_long_csv(report, args.out_prefix + "_long.csv");
  write_report_json(report, args.out_prefix + ".json");
  std::cout << "wrote " << args.out_prefix << ".csv, " << args.out_prefix
            << "_long.csv, " << args.out_prefix << ".json ("
            << report.cells.size() << " cells)\n";
  return kExitOk;
}

struct AnalyzeArgs {
  std::string ipd, control_ipd, families = "exponential,weibull,best";
  std::vector<std::string> control_specs;
  double alpha = 0.05, tau = 0.0, truncate = 0.0;
  double k_early = 0.0, k_delayed = 0.0;
  std::string k_middle, ee = "", de = "";
  bool crossing = false, no_combo = false, step_rmst = false;
  std::uint64_t seed = 0;
  std::string out, table, csv;
};

int run_analyze(const AnalyzeArgs& args) {
  WarningList warnings;
  SurvivalSample sample = load_ipd(args.ipd);

  AnalysisOptions options;
  options.alpha = args.alpha;
  options.mvn.seed = args.seed;
  options.rmst_mode = args.step_rmst ? RmstIntegration::StepExact
                                     : RmstIntegration::Trapezoid;
  if (args.tau > 0.0) options.tau = args.tau;
  if (args.truncate > 0.0) {
    sample = truncate_at(sample, args.truncate);
    options.truncation_time = args.truncate;
  }
  if (args.k_early > 0.0)
    options.change_points.push_back(ChangePointSpec::early(args.k_early));
  if (!args.k_middle.empty()) {
    const auto ks = parse_pair_list(args.k_middle, "--k-middle entry");
    if (ks.size() != 2) throw InvalidInput("--k-middle needs k1,k2");
    options.change_points.push_back(ChangePointSpec::middle(ks[0], ks[1]));
  }
  if (args.k_delayed > 0.0)
    options.change_points.push_back(ChangePointSpec::delayed(args.k_delayed));
  if (args.crossing)
    options.change_points.push_back(ChangePointSpec::crossing());
  if (!args.no_combo) {
    const auto ee = args.ee.empty() ? std::vector<double>{1.0, 3.0}
                                    : parse_pair_list(args.ee, "--ee entry");
    const auto de = args.de.empty() ? std::vector<double>{3.0, 5.0}
                                    : parse_pair_list(args.de, "--de entry");
    options.combo = ComboSpec::with_change_points(ee, de);
  }

  std::vector<ControlModel> controls;
  std::vector<FittedModel> ranking;
  if (!args.control_ipd.empty()) {
    if (!args.control_specs.empty())
      throw InvalidInput("give --control-ipd or --control, not both");
    const SurvivalSample ctl = load_ipd(args.control_ipd);
    const auto fits = fit_all_families(ctl, &warnings);
    ranking = fits;
    std::size_t pos = 0;
    std::string fam;
    std::string list = args.families;
    while (pos != std::string::npos) {
      const auto comma = list.find(',', pos);
      fam = list.substr(pos, comma == std::string::npos ? std::string::npos
                                                        : comma - pos);
      pos = comma == std::string::npos ? comma : comma + 1;
      if (fam == "best") {
        controls.push_back({"best:" + family_name(fits.front().family),
                            fits.front(), ctl.max_time()});
        continue;
      }
      const auto family = family_from_name(fam);
      if (!family) throw InvalidInput("unknown family '" + fam + "'");
      bool found = false;
      for (const auto& m : fits)
        if (m.family == *family) {
          controls.push_back({fam, m, ctl.max_time()});
          found = true;
          break;
        }
      if (!found)
        warn(&warnings, "requested family " + fam +
                            " did not fit successfully; column skipped");
    }
  } else {
    if (args.control_specs.empty())
      throw InvalidInput("give --control-ipd or at least one --control");
    for (const auto& spec : args.control_specs)
      controls.push_back({spec, parse_control_spec(spec), {}});
  }
  if (controls.empty()) throw InvalidInput("no usable control model");

  AnalysisReport report = full_report(sample, controls, options);
  report.control_ranking = std::move(ranking);
  for (const auto& w : warnings) report.warnings.insert(report.warnings.begin(), w);
  print_warnings(report.warnings);
  const std::string table = render_text_table(report);
  if (args.table.empty()) {
    std::cout << table;
  } else {
    std::ofstream out(args.table);
    if (!out) throw InvalidInput("cannot open output file: " + args.table);
    out << table;
  }
  if (!args.out.empty()) write_or_print(report_to_json(report), args.out);
  if (!args.csv.empty()) write_pvalue_csv(report, args.csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-sample survival tests for single-arm trials"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand(
      "fit", "Fit parametric families to control IPD and rank by AIC");
  fit->add_option("--ipd", fit_args.ipd, "control IPD CSV (time,status)")
      ->required();
  fit->add_option("--out", fit_args.out, "write the ranking as JSON");
  fit->add_option("--csv", fit_args.csv, "write the ranking as CSV");

  TestArgs test_args;
  auto* test = app.add_subcommand("test", "Run a single one-sample test");
  test->add_option("--method", test_args.method,
                   "oslrt|moslrt|early|middle|delayed|crossing|rmst|maxcombo")
      ->required();
  test->add_option("--ipd", test_args.ipd, "experimental IPD CSV")->required();
  test->add_option("--control", test_args.control_spec,
                   "explicit control model family:param1[,param2]");
  test->add_option("--control-ipd", test_args.control_ipd,
                   "control IPD CSV to fit");
  test->add_option("--family", test_args.family,
                   "family fitted to --control-ipd (default: best by AIC)");
  test->add_option("--k", test_args.k, "change-point (early/delayed)");
  test->add_option("--k1", test_args.k1, "middle lower change-point");
  test->add_option("--k2", test_args.k2, "middle upper change-point");
  test->add_option("--tau", test_args.tau, "RMST horizon");
  test->add_option("--alpha", test_args.alpha, "one-sided level")
      ->check(CLI::Range(1e-6, 0.5));
  test->add_option("--ee", test_args.ee, "max-combo early change-points a,b");
  test->add_option("--de", test_args.de, "max-combo delayed change-points a,b");
  test->add_option("--seed", test_args.seed, "seed for the exact p-value");
  test->add_flag("--step-rmst", test_args.step_rmst,
                 "integrate the KM curve exactly instead of trapezoid");
  test->add_option("--out", test_args.out, "write the outcome JSON here");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand(
      "simulate", "Run an operating-characteristic study from a JSON config");
  sim->add_option("--config", sim_args.config, "study definition JSON")
      ->required();
  auto* seed_opt =
      sim->add_option("--seed", sim_args.seed, "master seed (required)");
  sim->add_option("--out-prefix", sim_args.out_prefix,
                  "output prefix (default study_results)");
  sim->add_option("--workers", sim_args.workers,
                  "worker threads (0 = auto); results do not depend on it");

  AnalyzeArgs an_args;
  auto* an = app.add_subcommand(
      "analyze", "Full test battery against one or more control models");
  an->add_option("--ipd", an_args.ipd, "experimental IPD CSV")->required();
  an->add_option("--control-ipd", an_args.control_ipd, "control IPD CSV");
  an->add_option("--families", an_args.families,
                 "comma list of families / 'best' for --control-ipd columns");
  an->add_option("--control", an_args.control_specs,
                 "explicit control model(s) family:p1[,p2]");
  an->add_option("--alpha", an_args.alpha, "one-sided level")
      ->check(CLI::Range(1e-6, 0.5));
  an->add_option("--tau", an_args.tau, "RMST horizon override");
  an->add_option("--truncate", an_args.truncate,
                 "censor all observations beyond this time");
  an->add_option("--k-early", an_args.k_early, "early-effect change-point");
  an->add_option("--k-middle", an_args.k_middle, "middle window k1,k2");
  an->add_option("--k-delayed", an_args.k_delayed, "delayed change-point");
  an->add_flag("--crossing", an_args.crossing, "include the crossing test");
  an->add_flag("--no-combo", an_args.no_combo, "skip the max-combo row");
  an->add_option("--ee", an_args.ee, "max-combo early change-points a,b");
  an->add_option("--de", an_args.de, "max-combo delayed change-points a,b");
  an->add_option("--seed", an_args.seed, "seed for exact p-values");
  an->add_flag("--step-rmst", an_args.step_rmst,
               "integrate the KM curve exactly instead of trapezoid");
  an->add_option("--out", an_args.out, "write the report JSON here");
  an->add_option("--table", an_args.table, "write the text table here");
  an->add_option("--csv", an_args.csv, "write the p-value grid CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit) return run_fit(fit_args);
    if (*test) return run_test(test_args);
    if (*sim) {
      if (seed_opt->count() == 0)
        throw InvalidInput("simulate requires --seed for reproducibility");
      return run_simulate(sim_args);
    }
    if (*an) return run_analyze(an_args);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  return kExitInput;
}
