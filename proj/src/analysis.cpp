#include "onearm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace onearm {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& field, std::size_t line_no,
                    const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(field, &pos);
    if (pos != field.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("line " + std::to_string(line_no) + ": cannot parse " +
                       what + " '" + field + "'");
  }
}

}  // namespace

SurvivalSample load_ipd(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open IPD file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  SurvivalSample sample;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    if (line_no == 1) {
      std::string header = row;
      std::transform(header.begin(), header.end(), header.begin(), ::tolower);
      header.erase(std::remove_if(header.begin(), header.end(), ::isspace),
                   header.end());
      if (header != "time,status")
        throw InvalidInput("line 1: expected header 'time,status'");
      continue;
    }
    const auto comma = row.find(',');
    if (comma == std::string::npos)
      throw InvalidInput("line " + std::to_string(line_no) +
                         ": expected 'time,status'");
    const double t = parse_number(trim(row.substr(0, comma)), line_no, "time");
    const double s =
        parse_number(trim(row.substr(comma + 1)), line_no, "status");
    if (!(t >= 0.0) || !std::isfinite(t))
      throw InvalidInput("line " + std::to_string(line_no) +
                         ": negative or non-finite time");
    if (s != 0.0 && s != 1.0)
      throw InvalidInput("line " + std::to_string(line_no) +
                         ": status must be 0 or 1");
    sample.times.push_back(t);
    sample.events.push_back(s == 1.0 ? 1 : 0);
  }
  if (sample.times.empty())
    throw InvalidInput("IPD file has no data rows: " + path.string());
  sample.validate();
  return sample;
}

SurvivalSample truncate_at(const SurvivalSample& sample, double t_max) {
  sample.validate();
  if (!(t_max > 0.0)) throw InvalidInput("truncate_at: t_max must be > 0");
  SurvivalSample out = sample;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.times[i] > t_max) {
      out.times[i] = t_max;
      out.events[i] = 0;
    }
  }
  return out;
}

std::vector<FittedModel> fit_all_families(const SurvivalSample& control,
                                          WarningList* warnings) {
  control.validate();
  if (control.event_count() < 2)
    throw InvalidInput("fit_all_families: need at least 2 events");
  std::vector<FittedModel> fits;
  for (DistributionFamily family : kAllFamilies) {
    try {
      FittedModel m = fit_mle(control, family, warnings);
      if (!m.converged) {
        warn(warnings, "fit_all_families: " + family_name(family) +
                           " did not converge; excluded from the ranking");
        continue;
      }
      fits.push_back(m);
    } catch (const std::exception& e) {
      warn(warnings, "fit_all_families: " + family_name(family) +
                         " failed: " + e.what());
    }
  }
  if (fits.empty()) throw ComputationError("fit_all_families: every fit failed");
  std::stable_sort(fits.begin(), fits.end(),
                   [](const FittedModel& a, const FittedModel& b) {
                     return a.aic < b.aic;
                   });
  return fits;
}

namespace {

AnalysisCell run_cell(const std::string& row,
                      const std::function<TestOutcome()>& fn) {
  AnalysisCell cell;
  cell.row = row;
  try {
    cell.outcome = fn();
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

std::string fmt_g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

}  // namespace

AnalysisReport full_report(const SurvivalSample& experimental,
                           const std::vector<ControlModel>& controls,
                           const AnalysisOptions& options) {
  experimental.validate();
  if (controls.empty())
    throw InvalidInput("full_report: need at least one control model");
  AnalysisReport report;
  report.truncation_time = options.truncation_time;

  std::vector<ChangePointSpec> specs = options.change_points;
  report.row_labels = {"oslrt", "moslrt"};
  for (const auto& spec : specs) {
    switch (spec.kind) {
      case ChangePointSpec::Kind::PH:
        break;  // already covered by the standing rows
      case ChangePointSpec::Kind::Early:
        report.row_labels.push_back("early(k=" + fmt_g(spec.k) + ")");
        break;
      case ChangePointSpec::Kind::Middle:
        report.row_labels.push_back("middle(k1=" + fmt_g(spec.k) + ",k2=" +
                                    fmt_g(spec.k2) + ")");
        break;
      case ChangePointSpec::Kind::Delayed:
        report.row_labels.push_back("delayed(k=" + fmt_g(spec.k) + ")");
        break;
      case ChangePointSpec::Kind::Crossing:
        report.row_labels.push_back("crossing");
        break;
    }
  }
  report.row_labels.push_back("rmst");
  if (options.combo) {
    report.row_labels.push_back("maxcombo_hochberg");
    report.row_labels.push_back("maxcombo_exact");
  }

  for (const auto& control : controls) {
    AnalysisColumn column;
    column.control = control;
    double tau;
    if (options.tau) {
      tau = *options.tau;
    } else if (control.source_max_time) {
      tau = select_tau(experimental, *control.source_max_time);
    } else {
      tau = experimental.max_time();
    }
    column.tau_used = tau;

    column.cells.push_back(run_cell("oslrt", [&] {
      return oslrt(experimental, control.model, options.alpha);
    }));
    column.cells.push_back(run_cell("moslrt", [&] {
      return moslrt(experimental, control.model, options.alpha);
    }));
    for (const auto& spec : specs) {
      if (spec.kind == ChangePointSpec::Kind::PH) continue;
      column.cells.push_back(run_cell(report.row_labels[column.cells.size()], [&] {
        return score_test(experimental, control.model, spec, options.alpha);
      }));
    }
    column.cells.push_back(run_cell("rmst", [&] {
      return drmst_test(experimental, control.model, tau, options.alpha,
                        options.rmst_mode, &report.warnings);
    }));
    if (options.combo) {
      try {
        column.combo = max_combo_test(experimental, control.model,
                                      *options.combo, options.mvn,
                                      options.alpha);
        for (const auto& w : column.combo->warnings)
          warn(&report.warnings, control.name + ": " + w);
      } catch (const std::exception& e) {
        column.combo_error = e.what();
      }
    }
    report.columns.push_back(std::move(column));
  }
  return report;
}

namespace {

nlohmann::json outcome_to_json(const TestOutcome& o) {
  return {{"label", o.label},           {"statistic", o.statistic},
          {"p_one_sided", o.p_one_sided}, {"observed", o.observed},
          {"expected", o.expected},     {"alpha", o.alpha},
          {"reject", o.reject()}};
}

std::optional<double> cell_p(const AnalysisColumn& col, const std::string& row) {
  if (row == "maxcombo_hochberg")
    return col.combo ? std::optional<double>(col.combo->p_hochberg)
                     : std::nullopt;
  if (row == "maxcombo_exact")
    return col.combo ? std::optional<double>(col.combo->p_exact) : std::nullopt;
  for (const auto& cell : col.cells)
    if (cell.row == row && cell.ok) return cell.outcome.p_one_sided;
  return std::nullopt;
}

}  // namespace

nlohmann::json report_to_json(const AnalysisReport& report) {
  nlohmann::json j;
  j["rows"] = report.row_labels;
  if (report.truncation_time) j["truncation_time"] = *report.truncation_time;
  if (!report.control_ranking.empty()) {
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& m : report.control_ranking)
      ranking.push_back({{"family", family_name(m.family)},
                         {"params", {m.params[0], m.params[1]}},
                         {"loglik", m.loglik},
                         {"aic", m.aic}});
    j["control_ranking"] = ranking;
  }
  j["warnings"] = report.warnings;
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& col : report.columns) {
    nlohmann::json cj;
    cj["control"] = {{"name", col.control.name},
                     {"family", family_name(col.control.model.family)},
                     {"params", {col.control.model.params[0],
                                 col.control.model.params[1]}}};
    if (col.control.model.n_fit > 0) {
      cj["control"]["aic"] = col.control.model.aic;
      cj["control"]["loglik"] = col.control.model.loglik;
      cj["control"]["n_fit"] = col.control.model.n_fit;
    }
    cj["tau"] = col.tau_used;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : col.cells) {
      nlohmann::json e;
      e["row"] = cell.row;
      if (cell.ok)
        e["outcome"] = outcome_to_json(cell.outcome);
      else
        e["error"] = cell.error;
      cells.push_back(e);
    }
    cj["cells"] = cells;
    if (col.combo) {
      nlohmann::json k;
      k["statistic"] = col.combo->statistic;
      k["p_hochberg"] = col.combo->p_hochberg;
      k["p_exact"] = col.combo->p_exact;
      k["p_exact_se"] = col.combo->p_exact_se;
      nlohmann::json comps = nlohmann::json::array();
      for (std::size_t i = 0; i < col.combo->components.size(); ++i) {
        comps.push_back({{"label", col.combo->components[i].label()},
                         {"statistic", col.combo->statistics[i]},
                         {"p", col.combo->p_values[i]},
                         {"expected_events", col.combo->expected[i]}});
      }
      k["components"] = comps;
      cj["maxcombo"] = k;
    } else if (!col.combo_error.empty()) {
      cj["maxcombo"] = {{"error", col.combo_error}};
    }
    cols.push_back(cj);
  }
  j["columns"] = cols;
  return j;
}

std::string render_text_table(const AnalysisReport& report) {
  std::ostringstream out;
  constexpr int kCol = 14;
  out << "One-sided p-values (small = experimental better)\n";
  out << std::string(26, ' ');
  for (const auto& col : report.columns) {
    std::string head = col.control.name;
    if (col.control.model.n_fit > 0) {
      char aic[24];
      std::snprintf(aic, sizeof(aic), " (AIC %.1f)", col.control.model.aic);
      head += aic;
    }
    out << head;
    if (static_cast<int>(head.size()) < kCol + 10)
      out << std::string(kCol + 10 - head.size(), ' ');
  }
  out << '\n';
  for (const auto& row : report.row_labels) {
    std::string name = row;
    if (name.size() < 26)
      name += std::string(26 - name.size(), ' ');
    out << name;
    for (const auto& col : report.columns) {
      char buf[32];
      const auto p = cell_p(col, row);
      if (p)
        std::snprintf(buf, sizeof(buf), "%-*.*f", kCol + 10, 4, *p);
      else
        std::snprintf(buf, sizeof(buf), "%-*s", kCol + 10, "--");
      out << buf;
    }
    out << '\n';
  }
  for (const auto& col : report.columns) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "tau(%s) = %.4f", col.control.name.c_str(),
                  col.tau_used);
    out << buf << '\n';
  }
  return out.str();
}

void write_pvalue_csv(const AnalysisReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open output file: " + path);
  out << "test";
  for (const auto& col : report.columns) out << ',' << csv_field(col.control.name);
  out << '\n';
  for (const auto& row : report.row_labels) {
    out << csv_field(row);
    for (const auto& col : report.columns) {
      const auto p = cell_p(col, row);
      if (p) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.10g", *p);
        out << ',' << buf;
      } else {
        out << ",NA";
      }
    }
    out << '\n';
  }
}

}  // namespace onearm
