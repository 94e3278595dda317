#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "onearm/km_rmst.hpp"
#include "onearm/max_combo.hpp"

namespace onearm {

/// Piecewise-proportional hazard over an exponential baseline: hazard is
/// segment_hrs[j] * control_rate between consecutive change points, so the
/// cumulative hazard is continuous, piecewise linear and strictly increasing.
struct PiecewiseHazardSpec {
  double control_rate = M_LN2 / 2.0;
  std::vector<double> change_points;
  std::vector<double> segment_hrs{1.0};

  void validate() const;
  double cum_hazard(double t) const;
  double inverse_cum_hazard(double h) const;
};

/// Scenario map used throughout the operating-characteristic studies:
///   1 null, 2 proportional hazards, 3 early effect (k=1), 4 middle effect
///   (k1=1, k2=4), 5 delayed effect (k=3), 6 crossing hazards at k=1
///   (hazard ratio 1/hr before the crossing, hr after).
PiecewiseHazardSpec scenario_spec(int scenario, double hr, double control_rate);

/// Inverse-transform draw: H^{-1}(-log u) for u in (0,1).
double sample_piecewise_exponential(const PiecewiseHazardSpec& spec, double u);

/// X = min(event, dropout, study_end - entry), delta = event is the minimum.
struct ObservedPatient {
  double time;
  bool event;
};
ObservedPatient observe_patient(double entry, double event_time,
                                double dropout_time, double study_end);

/// Exponential dropout hazard such that the expected proportion of
/// observations censored by dropout (dropout occurring before both the event
/// and the administrative cutoff) equals `target`, under uniform accrual on
/// [0, accrual] and cutoff at accrual + followup. Monte Carlo with a fixed
/// calibration seed (2e5 draws), bisection to 1e-3 on the proportion.
/// target 0 returns 0 (administrative censoring only).
double calibrate_censor_rate(const PiecewiseHazardSpec& spec, double accrual,
                             double followup, double target,
                             WarningList* warnings = nullptr);

struct ScenarioConfig {
  int scenario = 1;
  std::size_t n = 50;
  double hr = 1.0;
  double censor_target = 0.0;
  double accrual_years = 3.0;
  double followup_years = 4.0;
  double control_rate = M_LN2 / 2.0;  // generation-side baseline
  std::uint64_t seed = 0;

  std::uint64_t cell_key() const;
  void validate() const;
};

/// One replicate; the RNG stream is a pure function of (seed, cell, index).
SurvivalSample simulate_trial(const ScenarioConfig& config,
                              double censor_hazard,
                              std::uint64_t replicate_index);

/// Variable-control replicate for the control-variability study: the control
/// median is drawn first from Gamma(shape, rate), the generation baseline
/// becomes log(2)/median, and the patient stream continues on the same RNG.
/// A nonpositive shape or rate bypasses the draw, reproducing simulate_trial
/// exactly.
SurvivalSample simulate_trial_variable_control(const ScenarioConfig& config,
                                               double censor_hazard,
                                               std::uint64_t replicate_index,
                                               double gamma_shape,
                                               double gamma_rate);

/// One analysis-side test in a battery.
struct TestSpec {
  enum class Kind { Oslrt, MOslrt, Early, Middle, Delayed, Crossing, Rmst, MaxCombo };
  Kind kind = Kind::Oslrt;
  double k = 0.0;
  double k2 = 0.0;
  std::vector<double> combo_early{1.0, 3.0};
  std::vector<double> combo_delayed{3.0, 5.0};
  double offset_tag = 0.0;  // reporting column for the change-point sweep

  std::string label() const;
};

/// Per-scenario analysis battery with the change points tuned to each
/// effect pattern.
std::vector<TestSpec> default_battery(int scenario);

struct StudyDefinition {
  enum class Type { Grid, CpSweep, ControlVariability, MisspecifiedAnalysis };
  Type type = Type::Grid;
  std::vector<int> scenarios{1, 2, 3, 4, 5, 6};
  std::vector<std::size_t> n_grid{20, 30, 50, 60, 80, 100, 150, 200};
  std::vector<double> hr_grid{0.5};
  std::vector<double> censor_grid{0.15};
  std::size_t replications = 2000;
  double alpha = 0.05;
  double control_rate = M_LN2 / 2.0;
  double accrual_years = 3.0;
  double followup_years = 4.0;
  std::optional<std::vector<TestSpec>> tests;  // default: per-scenario battery
  std::optional<FittedModel> analysis_control; // misspecified-analysis study
  std::vector<double> offsets{-0.5, -0.25, 0.25, 0.5};
  double gamma_shape = 80.0;
  double gamma_rate = 40.0;
  double rmst_tau = 7.0;
  RmstIntegration rmst_mode = RmstIntegration::StepExact;
  MvnOptions mvn{1e-3, 200000, 0};
};

StudyDefinition study_from_json(const nlohmann::json& j);
nlohmann::json study_to_json(const StudyDefinition& def);

struct SimulationCell {
  std::string variant;  // "", "fixed"/"variable", "well_specified"/"misspecified"
  int scenario = 0;
  std::string test;
  double offset = 0.0;
  std::size_t n = 0;
  double hr = 1.0;
  double censor_target = 0.0;
  std::size_t replications = 0;
  std::size_t rejections = 0;
  std::size_t degenerate = 0;
  double rejection_rate = 0.0;
  double mc_se = 0.0;
  double mean_events = 0.0;
  double mean_censoring = 0.0;
};

struct SimulationReport {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string study;
  std::vector<SimulationCell> cells;
  WarningList warnings;
};

void write_report_csv(const SimulationReport& report, const std::string& path);
void write_report_long_csv(const SimulationReport& report, const std::string& path);
void write_report_json(const SimulationReport& report, const std::string& path);

SimulationReport run_study(const StudyDefinition& def, std::uint64_t seed,
                           unsigned workers = 0);
SimulationReport cp_misspecification_sweep(const StudyDefinition& def,
                                           std::uint64_t seed,
                                           unsigned workers = 0);
SimulationReport control_variability_study(const StudyDefinition& def,
                                           std::uint64_t seed,
                                           unsigned workers = 0);
SimulationReport misspecified_analysis_study(const StudyDefinition& def,
                                             std::uint64_t seed,
                                             unsigned workers = 0);

/// Dispatch on def.type.
SimulationReport run_any_study(const StudyDefinition& def, std::uint64_t seed,
                               unsigned workers = 0);

}  // namespace onearm
