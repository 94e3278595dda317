#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "onearm/km_rmst.hpp"
#include "onearm/max_combo.hpp"

namespace onearm {

/// Parses a two-column CSV with header `time,status` (status 0/1). Malformed
/// rows report their line number.
SurvivalSample load_ipd(const std::filesystem::path& path);

/// Observations beyond t_max become censored at t_max.
SurvivalSample truncate_at(const SurvivalSample& sample, double t_max);

/// Fits every family and returns the successful fits sorted by ascending
/// AIC; failures are reported as warnings. Throws when nothing converges.
std::vector<FittedModel> fit_all_families(const SurvivalSample& control,
                                          WarningList* warnings = nullptr);

/// A named analysis-side control model; `source_max_time` is the largest
/// observed control time when the model came from control IPD (it feeds the
/// RMST horizon rule).
struct ControlModel {
  std::string name;
  FittedModel model;
  std::optional<double> source_max_time;
};

struct AnalysisOptions {
  std::vector<ChangePointSpec> change_points;
  std::optional<ComboSpec> combo;
  std::optional<double> tau;  // RMST horizon; default min(max exp, max ctl)
  double alpha = 0.05;
  MvnOptions mvn;
  RmstIntegration rmst_mode = RmstIntegration::Trapezoid;
  std::optional<double> truncation_time;  // metadata echoed into the report
};

struct AnalysisCell {
  std::string row;
  bool ok = false;
  TestOutcome outcome;
  std::string error;
};

struct AnalysisColumn {
  ControlModel control;
  double tau_used = 0.0;
  std::vector<AnalysisCell> cells;
  std::optional<ComboResult> combo;
  std::string combo_error;
};

struct AnalysisReport {
  std::vector<std::string> row_labels;
  std::vector<AnalysisColumn> columns;
  std::vector<FittedModel> control_ranking;  // AIC-ascending, when fitted
  std::optional<double> truncation_time;
  WarningList warnings;
};

/// Runs the whole battery (OSLRT, mOSLRT, requested score tests, RMST and
/// optionally max-Combo) against each control model. Per-cell degeneracies
/// are recorded in place and never abort the grid. All p-values are oriented
/// small = experimental better.
AnalysisReport full_report(const SurvivalSample& experimental,
                           const std::vector<ControlModel>& controls,
                           const AnalysisOptions& options);

nlohmann::json report_to_json(const AnalysisReport& report);
std::string render_text_table(const AnalysisReport& report);
void write_pvalue_csv(const AnalysisReport& report, const std::string& path);

}  // namespace onearm
