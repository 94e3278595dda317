#include "onearm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "onearm/rng.hpp"

namespace onearm {

void PiecewiseHazardSpec::validate() const {
  if (!(control_rate > 0.0) || !std::isfinite(control_rate))
    throw InvalidInput("piecewise spec: control rate must be > 0");
  if (segment_hrs.size() != change_points.size() + 1)
    throw InvalidInput("piecewise spec: need one hazard ratio per segment");
  for (double r : segment_hrs)
    if (!(r > 0.0) || !std::isfinite(r))
      throw InvalidInput("piecewise spec: hazard ratios must be > 0");
  for (std::size_t j = 0; j < change_points.size(); ++j) {
    if (!(change_points[j] > 0.0) || !std::isfinite(change_points[j]))
      throw InvalidInput("piecewise spec: change points must be positive");
    if (j > 0 && !(change_points[j] > change_points[j - 1]))
      throw InvalidInput("piecewise spec: change points must be ascending");
  }
}

double PiecewiseHazardSpec::cum_hazard(double t) const {
  double h = 0.0, lo = 0.0;
  for (std::size_t j = 0; j < segment_hrs.size(); ++j) {
    const double hi =
        j < change_points.size() ? change_points[j] : std::numeric_limits<double>::infinity();
    if (t <= hi) return h + segment_hrs[j] * control_rate * (t - lo);
    h += segment_hrs[j] * control_rate * (hi - lo);
    lo = hi;
  }
  return h;
}

double PiecewiseHazardSpec::inverse_cum_hazard(double target) const {
  double acc = 0.0, lo = 0.0;
  for (std::size_t j = 0; j < segment_hrs.size(); ++j) {
    const double rate = segment_hrs[j] * control_rate;
    const double hi =
        j < change_points.size() ? change_points[j] : std::numeric_limits<double>::infinity();
    const double cap = rate * (hi - lo);
    if (target <= acc + cap || j + 1 == segment_hrs.size())
      return lo + (target - acc) / rate;
    acc += cap;
    lo = hi;
  }
  return lo;
}

PiecewiseHazardSpec scenario_spec(int scenario, double hr, double control_rate) {
  if (!(hr > 0.0)) throw InvalidInput("scenario hazard ratio must be > 0");
  PiecewiseHazardSpec spec;
  spec.control_rate = control_rate;
  switch (scenario) {
    case 1:
      spec.segment_hrs = {1.0};
      break;
    case 2:
      spec.segment_hrs = {hr};
      break;
    case 3:
      spec.change_points = {1.0};
      spec.segment_hrs = {hr, 1.0};
      break;
    case 4:
      spec.change_points = {1.0, 4.0};
      spec.segment_hrs = {1.0, hr, 1.0};
      break;
    case 5:
      spec.change_points = {3.0};
      spec.segment_hrs = {1.0, hr};
      break;
    case 6:
      // crossing hazards: harm before the crossing at k=1, benefit after,
      // so the battery's lower-tail rejection region detects the late benefit
      spec.change_points = {1.0};
      spec.segment_hrs = {1.0 / hr, hr};
      break;
    default:
      throw InvalidInput("scenario must be 1..6");
  }
  spec.validate();
  return spec;
}

double sample_piecewise_exponential(const PiecewiseHazardSpec& spec, double u) {
  spec.validate();
  if (!(u > 0.0 && u < 1.0))
    throw InvalidInput("sample_piecewise_exponential: u must lie in (0,1)");
  return spec.inverse_cum_hazard(-std::log(u));
}

ObservedPatient observe_patient(double entry, double event_time,
                                double dropout_time, double study_end) {
  const double admin = study_end - entry;
  const double limit = std::min(dropout_time, admin);
  if (event_time <= limit) return {event_time, true};
  return {limit, false};
}

double calibrate_censor_rate(const PiecewiseHazardSpec& spec, double accrual,
                             double followup, double target,
                             WarningList* warnings) {
  spec.validate();
  if (!(accrual > 0.0) || !(followup >= 0.0))
    throw InvalidInput("calibrate_censor_rate: bad trial design");
  if (!(target >= 0.0 && target < 0.5))
    throw InvalidInput("calibrate_censor_rate: target must lie in [0, 0.5)");
  if (target == 0.0) return 0.0;

  constexpr std::size_t kDraws = 200000;
  const double study_end = accrual + followup;
  Rng rng(mix_seed({0xca11b7a7e5ULL, hash_double(spec.control_rate),
                    hash_double(target)}));
  std::vector<double> entry(kDraws), event(kDraws), u_drop(kDraws);
  for (std::size_t i = 0; i < kDraws; ++i) {
    entry[i] = rng.uniform(0.0, accrual);
    event[i] = sample_piecewise_exponential(spec, rng.uniform());
    u_drop[i] = rng.uniform();
  }
  // proportion of observations ended by dropout, as a function of the hazard;
  // common draws make it monotone so bisection is exact
  auto dropout_share = [&](double mu) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < kDraws; ++i) {
      const double d = -std::log(u_drop[i]) / mu;
      if (d < event[i] && d < study_end - entry[i]) ++hit;
    }
    return static_cast<double>(hit) / kDraws;
  };

  double lo = 0.0, hi = 0.25;
  int guard = 0;
  while (dropout_share(hi) < target) {
    hi *= 2.0;
    if (++guard > 64)
      throw ComputationError("calibrate_censor_rate: target unattainable");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double share = dropout_share(mid);
    if (std::fabs(share - target) <= 1e-3) return mid;
    (share < target ? lo : hi) = mid;
    if (hi - lo < 1e-12 * std::max(1.0, hi)) break;
  }
  warn(warnings, "calibrate_censor_rate: bisection stopped at tolerance floor");
  return 0.5 * (lo + hi);
}

std::uint64_t ScenarioConfig::cell_key() const {
  return mix_seed({static_cast<std::uint64_t>(scenario), n, hash_double(hr),
                   hash_double(censor_target), hash_double(accrual_years),
                   hash_double(followup_years), hash_double(control_rate)});
}

void ScenarioConfig::validate() const {
  if (scenario < 1 || scenario > 6) throw InvalidInput("scenario must be 1..6");
  if (n == 0) throw InvalidInput("sample size must be positive");
  if (!(hr > 0.0)) throw InvalidInput("hazard ratio must be > 0");
  if (!(censor_target >= 0.0 && censor_target <= 0.35))
    throw InvalidInput("censoring target must lie in [0, 0.35]");
  if (!(accrual_years > 0.0) || !(followup_years >= 0.0))
    throw InvalidInput("trial durations must be positive");
  if (!(control_rate > 0.0)) throw InvalidInput("control rate must be > 0");
}

namespace {

SurvivalSample generate_sample(Rng& rng, const PiecewiseHazardSpec& spec,
                               std::size_t n, double accrual, double study_end,
                               double censor_hazard) {
  SurvivalSample sample;
  sample.times.resize(n);
  sample.events.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double entry = rng.uniform(0.0, accrual);
    const double event_time = sample_piecewise_exponential(spec, rng.uniform());
    const double dropout = censor_hazard > 0.0
                               ? rng.exponential(censor_hazard)
                               : std::numeric_limits<double>::infinity();
    const ObservedPatient obs =
        observe_patient(entry, event_time, dropout, study_end);
    sample.times[i] = obs.time;
    sample.events[i] = obs.event ? 1 : 0;
  }
  return sample;
}

}  // namespace

SurvivalSample simulate_trial(const ScenarioConfig& config, double censor_hazard,
                              std::uint64_t replicate_index) {
  config.validate();
  Rng rng(mix_seed({config.seed, config.cell_key(), replicate_index}));
  const auto spec =
      scenario_spec(config.scenario, config.hr, config.control_rate);
  return generate_sample(rng, spec, config.n, config.accrual_years,
                         config.accrual_years + config.followup_years,
                         censor_hazard);
}

SurvivalSample simulate_trial_variable_control(const ScenarioConfig& config,
                                               double censor_hazard,
                                               std::uint64_t replicate_index,
                                               double gamma_shape,
                                               double gamma_rate) {
  config.validate();
  Rng rng(mix_seed({config.seed, config.cell_key(), replicate_index}));
  double rate = config.control_rate;
  if (gamma_shape > 0.0 && gamma_rate > 0.0) {
    const double median = rng.gamma(gamma_shape, gamma_rate);
    rate = M_LN2 / median;
  }
  const auto spec = scenario_spec(config.scenario, config.hr, rate);
  return generate_sample(rng, spec, config.n, config.accrual_years,
                         config.accrual_years + config.followup_years,
                         censor_hazard);
}

std::string TestSpec::label() const {
  char buf[64];
  switch (kind) {
    case Kind::Oslrt: return "oslrt";
    case Kind::MOslrt: return "moslrt";
    case Kind::Early:
      std::snprintf(buf, sizeof(buf), "early(k=%g)", k);
      return buf;
    case Kind::Middle:
      std::snprintf(buf, sizeof(buf), "middle(k1=%g,k2=%g)", k, k2);
      return buf;
    case Kind::Delayed:
      std::snprintf(buf, sizeof(buf), "delayed(k=%g)", k);
      return buf;
    case Kind::Crossing: return "crossing";
    case Kind::Rmst: return "rmst";
    case Kind::MaxCombo: return "maxcombo";
  }
  return "?";
}

std::vector<TestSpec> default_battery(int scenario) {
  auto early = [](double k) { TestSpec t; t.kind = TestSpec::Kind::Early; t.k = k; return t; };
  auto middle = [](double k1, double k2) {
    TestSpec t;
    t.kind = TestSpec::Kind::Middle;
    t.k = k1;
    t.k2 = k2;
    return t;
  };
  auto delayed = [](double k) { TestSpec t; t.kind = TestSpec::Kind::Delayed; t.k = k; return t; };
  TestSpec os, mos, ch, rm, mc;
  os.kind = TestSpec::Kind::Oslrt;
  mos.kind = TestSpec::Kind::MOslrt;
  ch.kind = TestSpec::Kind::Crossing;
  rm.kind = TestSpec::Kind::Rmst;
  mc.kind = TestSpec::Kind::MaxCombo;
  switch (scenario) {
    case 1:
    case 2:
      return {os, mos, early(4), middle(1, 6), delayed(2), ch, rm, mc};
    case 3:
      return {os, mos, early(1), middle(1, 7), delayed(1), ch, rm, mc};
    case 4:
      return {os, mos, early(4), middle(1, 4), delayed(1), ch, rm, mc};
    case 5:
      return {os, mos, early(3), middle(0, 3), delayed(3), ch, rm, mc};
    case 6:
      return {os, mos, early(1), middle(1, 4), delayed(1), ch, rm, mc};
    default:
      throw InvalidInput("scenario must be 1..6");
  }
}

namespace {

TestSpec test_from_json(const nlohmann::json& j) {
  TestSpec t;
  const std::string name = j.at("test").get<std::string>();
  if (name == "oslrt") t.kind = TestSpec::Kind::Oslrt;
  else if (name == "moslrt") t.kind = TestSpec::Kind::MOslrt;
  else if (name == "early") {
    t.kind = TestSpec::Kind::Early;
    t.k = j.at("k").get<double>();
  } else if (name == "middle") {
    t.kind = TestSpec::Kind::Middle;
    t.k = j.at("k1").get<double>();
    t.k2 = j.at("k2").get<double>();
  } else if (name == "delayed") {
    t.kind = TestSpec::Kind::Delayed;
    t.k = j.at("k").get<double>();
  } else if (name == "crossing") t.kind = TestSpec::Kind::Crossing;
  else if (name == "rmst") t.kind = TestSpec::Kind::Rmst;
  else if (name == "maxcombo") {
    t.kind = TestSpec::Kind::MaxCombo;
    if (j.contains("ee")) t.combo_early = j.at("ee").get<std::vector<double>>();
    if (j.contains("de")) t.combo_delayed = j.at("de").get<std::vector<double>>();
  } else {
    throw InvalidInput("unknown test name '" + name + "' in study config");
  }
  return t;
}

nlohmann::json test_to_json(const TestSpec& t) {
  nlohmann::json j;
  switch (t.kind) {
    case TestSpec::Kind::Oslrt: j["test"] = "oslrt"; break;
    case TestSpec::Kind::MOslrt: j["test"] = "moslrt"; break;
    case TestSpec::Kind::Early: j["test"] = "early"; j["k"] = t.k; break;
    case TestSpec::Kind::Middle:
      j["test"] = "middle";
      j["k1"] = t.k;
      j["k2"] = t.k2;
      break;
    case TestSpec::Kind::Delayed: j["test"] = "delayed"; j["k"] = t.k; break;
    case TestSpec::Kind::Crossing: j["test"] = "crossing"; break;
    case TestSpec::Kind::Rmst: j["test"] = "rmst"; break;
    case TestSpec::Kind::MaxCombo:
      j["test"] = "maxcombo";
      j["ee"] = t.combo_early;
      j["de"] = t.combo_delayed;
      break;
  }
  return j;
}

FittedModel control_from_json(const nlohmann::json& j) {
  const auto family = family_from_name(j.at("family").get<std::string>());
  if (!family) throw InvalidInput("unknown family in analysis_control");
  const auto params = j.at("params").get<std::vector<double>>();
  if (static_cast<int>(params.size()) != parameter_count(*family))
    throw InvalidInput("analysis_control: wrong parameter count");
  return FittedModel::from_params(*family, params[0],
                                  params.size() > 1 ? params[1] : 0.0);
}

}  // namespace

namespace {
StudyDefinition study_from_json_impl(const nlohmann::json& j);
}  // namespace

StudyDefinition study_from_json(const nlohmann::json& j) {
  try {
    return study_from_json_impl(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("study config: ") + e.what());
  }
}

namespace {

StudyDefinition study_from_json_impl(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "study",        "scenarios",     "n",
      "hr",           "censoring",     "replications",
      "alpha",        "control_rate",  "control_median",
      "accrual_years", "followup_years", "tests",
      "analysis_control", "offsets",   "median_gamma",
      "rmst_tau",     "rmst_integration", "mvn"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw InvalidInput("unknown study config key '" + it.key() + "'");

  StudyDefinition def;
  const std::string study = j.value("study", std::string("grid"));
  if (study == "grid") def.type = StudyDefinition::Type::Grid;
  else if (study == "cp_sweep") def.type = StudyDefinition::Type::CpSweep;
  else if (study == "control_variability")
    def.type = StudyDefinition::Type::ControlVariability;
  else if (study == "misspecified_analysis")
    def.type = StudyDefinition::Type::MisspecifiedAnalysis;
  else throw InvalidInput("unknown study type '" + study + "'");

  if (j.contains("scenarios")) def.scenarios = j["scenarios"].get<std::vector<int>>();
  if (j.contains("n")) def.n_grid = j["n"].get<std::vector<std::size_t>>();
  if (j.contains("hr")) def.hr_grid = j["hr"].get<std::vector<double>>();
  if (j.contains("censoring")) def.censor_grid = j["censoring"].get<std::vector<double>>();
  if (j.contains("replications")) def.replications = j["replications"].get<std::size_t>();
  if (j.contains("alpha")) def.alpha = j["alpha"].get<double>();
  if (j.contains("control_rate") && j.contains("control_median"))
    throw InvalidInput("give control_rate or control_median, not both");
  if (j.contains("control_rate")) def.control_rate = j["control_rate"].get<double>();
  if (j.contains("control_median"))
    def.control_rate = M_LN2 / j["control_median"].get<double>();
  if (j.contains("accrual_years")) def.accrual_years = j["accrual_years"].get<double>();
  if (j.contains("followup_years")) def.followup_years = j["followup_years"].get<double>();
  if (j.contains("tests")) {
    std::vector<TestSpec> battery;
    for (const auto& tj : j["tests"]) battery.push_back(test_from_json(tj));
    if (battery.empty()) throw InvalidInput("tests array is empty");
    def.tests = battery;
  }
  if (j.contains("analysis_control"))
    def.analysis_control = control_from_json(j["analysis_control"]);
  if (j.contains("offsets")) def.offsets = j["offsets"].get<std::vector<double>>();
  if (j.contains("median_gamma")) {
    def.gamma_shape = j["median_gamma"].value("shape", 80.0);
    def.gamma_rate = j["median_gamma"].value("rate", 40.0);
  }
  if (j.contains("rmst_tau")) def.rmst_tau = j["rmst_tau"].get<double>();
  if (j.contains("rmst_integration")) {
    const std::string mode = j["rmst_integration"].get<std::string>();
    if (mode == "trapezoid") def.rmst_mode = RmstIntegration::Trapezoid;
    else if (mode == "step") def.rmst_mode = RmstIntegration::StepExact;
    else throw InvalidInput("rmst_integration must be 'trapezoid' or 'step'");
  }
  if (j.contains("mvn")) {
    def.mvn.target_se = j["mvn"].value("target_se", def.mvn.target_se);
    def.mvn.max_points = j["mvn"].value("max_points", def.mvn.max_points);
  }
  if (!(def.alpha > 0.0 && def.alpha <= 0.5))
    throw InvalidInput("alpha must lie in (0, 0.5]");
  if (def.replications == 0) throw InvalidInput("replications must be positive");
  for (double c : def.censor_grid)
    if (!(c >= 0.0 && c <= 0.35))
      throw InvalidInput("censoring targets must lie in [0, 0.35]");
  return def;
}

}  // namespace

nlohmann::json study_to_json(const StudyDefinition& def) {
  nlohmann::json j;
  switch (def.type) {
    case StudyDefinition::Type::Grid: j["study"] = "grid"; break;
    case StudyDefinition::Type::CpSweep: j["study"] = "cp_sweep"; break;
    case StudyDefinition::Type::ControlVariability:
      j["study"] = "control_variability";
      break;
    case StudyDefinition::Type::MisspecifiedAnalysis:
      j["study"] = "misspecified_analysis";
      break;
  }
  j["scenarios"] = def.scenarios;
  j["n"] = def.n_grid;
  j["hr"] = def.hr_grid;
  j["censoring"] = def.censor_grid;
  j["replications"] = def.replications;
  j["alpha"] = def.alpha;
  j["control_rate"] = def.control_rate;
  j["accrual_years"] = def.accrual_years;
  j["followup_years"] = def.followup_years;
  if (def.tests) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : *def.tests) arr.push_back(test_to_json(t));
    j["tests"] = arr;
  }
  if (def.analysis_control) {
    j["analysis_control"] = {
        {"family", family_name(def.analysis_control->family)},
        {"params", {def.analysis_control->params[0], def.analysis_control->params[1]}}};
  }
  j["offsets"] = def.offsets;
  j["median_gamma"] = {{"shape", def.gamma_shape}, {"rate", def.gamma_rate}};
  j["rmst_tau"] = def.rmst_tau;
  j["rmst_integration"] =
      def.rmst_mode == RmstIntegration::Trapezoid ? "trapezoid" : "step";
  j["mvn"] = {{"target_se", def.mvn.target_se}, {"max_points", def.mvn.max_points}};
  return j;
}

namespace {

unsigned resolve_workers(unsigned workers) {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : std::min(hw, 8u);
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, const Fn& fn) {
  workers = std::min<std::size_t>(workers, count == 0 ? 1 : count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = count * w / workers;
    const std::size_t hi = count * (w + 1) / workers;
    pool.emplace_back([&fn, lo, hi]() {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Battery rows: every test yields one row, max-combo yields two.
std::vector<std::string> expand_row_labels(const std::vector<TestSpec>& battery) {
  std::vector<std::string> rows;
  for (const auto& t : battery) {
    if (t.kind == TestSpec::Kind::MaxCombo) {
      rows.push_back("maxcombo_hochberg");
      rows.push_back("maxcombo_exact");
    } else {
      rows.push_back(t.label());
    }
  }
  return rows;
}

std::vector<double> expand_row_offsets(const std::vector<TestSpec>& battery) {
  std::vector<double> offs;
  for (const auto& t : battery) {
    offs.push_back(t.offset_tag);
    if (t.kind == TestSpec::Kind::MaxCombo) offs.push_back(t.offset_tag);
  }
  return offs;
}

void apply_battery(const SurvivalSample& sample, const FittedModel& control,
                   const std::vector<TestSpec>& battery,
                   const StudyDefinition& def, std::uint64_t mvn_seed,
                   std::uint8_t* reject, std::uint8_t* degenerate) {
  std::size_t row = 0;
  for (const auto& t : battery) {
    auto set = [&](bool rej, bool degen) {
      reject[row] = rej ? 1 : 0;
      degenerate[row] = degen ? 1 : 0;
      ++row;
    };
    try {
      switch (t.kind) {
        case TestSpec::Kind::Oslrt:
          set(oslrt(sample, control, def.alpha).reject(), false);
          break;
        case TestSpec::Kind::MOslrt:
          set(moslrt(sample, control, def.alpha).reject(), false);
          break;
        case TestSpec::Kind::Early:
          set(z_early(sample, control, t.k, def.alpha).reject(), false);
          break;
        case TestSpec::Kind::Middle:
          set(z_middle(sample, control, t.k, t.k2, def.alpha).reject(), false);
          break;
        case TestSpec::Kind::Delayed:
          set(z_delayed(sample, control, t.k, def.alpha).reject(), false);
          break;
        case TestSpec::Kind::Crossing:
          set(z_crossing(sample, control, def.alpha).reject(), false);
          break;
        case TestSpec::Kind::Rmst: {
          const double tau = std::min(def.rmst_tau, sample.max_time());
          if (!(tau > 0.0)) throw DegenerateStatistic("rmst: empty horizon");
          set(drmst_test(sample, control, tau, def.alpha, def.rmst_mode)
                  .reject(),
              false);
          break;
        }
        case TestSpec::Kind::MaxCombo: {
          MvnOptions mvn = def.mvn;
          mvn.seed = mvn_seed;
          const ComboSpec spec =
              ComboSpec::with_change_points(t.combo_early, t.combo_delayed);
          const ComboResult combo =
              max_combo_test(sample, control, spec, mvn, def.alpha);
          set(combo.p_hochberg < def.alpha, false);
          set(combo.p_exact < def.alpha, false);
          break;
        }
      }
    } catch (const std::exception&) {
      // per-replication failures count as non-rejections; the grid never aborts
      set(false, true);
      if (t.kind == TestSpec::Kind::MaxCombo) set(false, true);
    }
  }
}

void validate_battery(const std::vector<TestSpec>& battery) {
  for (const auto& t : battery) {
    switch (t.kind) {
      case TestSpec::Kind::Early:
        ChangePointSpec::early(t.k);
        break;
      case TestSpec::Kind::Middle:
        ChangePointSpec::middle(t.k, t.k2);
        break;
      case TestSpec::Kind::Delayed:
        ChangePointSpec::delayed(t.k);
        break;
      case TestSpec::Kind::MaxCombo:
        if (t.combo_early.empty() && t.combo_delayed.empty())
          throw InvalidInput("maxcombo test needs at least one change-point");
        break;
      default:
        break;
    }
  }
}

struct VariantPlan {
  std::string name;               // cell label ("", "fixed", ...)
  bool variable_control = false;  // draw the control median per replicate
  FittedModel analysis;           // analysis-side control model
};

/// Runs one (scenario, n, hr, censor) cell for every variant and battery row.
void evaluate_cell(const StudyDefinition& def, const ScenarioConfig& cfg,
                   double censor_hazard, const std::vector<TestSpec>& battery,
                   const std::vector<VariantPlan>& variants, unsigned workers,
                   SimulationReport& report) {
  const auto row_labels = expand_row_labels(battery);
  const auto row_offsets = expand_row_offsets(battery);
  const std::size_t rows = row_labels.size();
  const std::size_t reps = def.replications;
  const std::size_t nv = variants.size();

  std::vector<std::uint8_t> reject(nv * rows * reps, 0);
  std::vector<std::uint8_t> degen(nv * rows * reps, 0);
  std::vector<double> events(nv * reps, 0.0);

  parallel_for(reps, workers, [&](std::size_t rep) {
    for (std::size_t v = 0; v < nv; ++v) {
      const SurvivalSample sample =
          variants[v].variable_control
              ? simulate_trial_variable_control(cfg, censor_hazard, rep,
                                                def.gamma_shape, def.gamma_rate)
              : simulate_trial(cfg, censor_hazard, rep);
      events[v * reps + rep] = static_cast<double>(sample.event_count());
      const std::uint64_t mvn_seed =
          mix_seed({cfg.seed, cfg.cell_key(), rep, 0xe7ac7 + v});
      apply_battery(sample, variants[v].analysis, battery, def, mvn_seed,
                    &reject[(v * reps + rep) * rows],
                    &degen[(v * reps + rep) * rows]);
    }
  });

  for (std::size_t v = 0; v < nv; ++v) {
    double sum_events = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep)
      sum_events += events[v * reps + rep];
    for (std::size_t r = 0; r < rows; ++r) {
      SimulationCell cell;
      cell.variant = variants[v].name;
      cell.scenario = cfg.scenario;
      cell.test = row_labels[r];
      cell.offset = row_offsets[r];
      cell.n = cfg.n;
      cell.hr = cfg.hr;
      cell.censor_target = cfg.censor_target;
      cell.replications = reps;
      for (std::size_t rep = 0; rep < reps; ++rep) {
        cell.rejections += reject[(v * reps + rep) * rows + r];
        cell.degenerate += degen[(v * reps + rep) * rows + r];
      }
      const double p = static_cast<double>(cell.rejections) / reps;
      cell.rejection_rate = p;
      cell.mc_se = std::sqrt(p * (1.0 - p) / reps);
      cell.mean_events = sum_events / reps;
      cell.mean_censoring = 1.0 - sum_events / (reps * cfg.n);
      report.cells.push_back(std::move(cell));
    }
  }
}

double cached_censor_hazard(const StudyDefinition& def, int scenario, double hr,
                            double target,
                            std::map<std::tuple<int, double, double>, double>& cache,
                            WarningList* warnings) {
  const auto key = std::make_tuple(scenario, hr, target);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const double mu =
      calibrate_censor_rate(scenario_spec(scenario, hr, def.control_rate),
                            def.accrual_years, def.followup_years, target,
                            warnings);
  cache.emplace(key, mu);
  return mu;
}

SimulationReport make_report(const StudyDefinition& def, std::uint64_t seed,
                             const std::string& study) {
  SimulationReport report;
  report.config = study_to_json(def);
  report.seed = seed;
  report.study = study;
  return report;
}

ScenarioConfig cell_config(const StudyDefinition& def, int scenario,
                           std::size_t n, double hr, double censor,
                           std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.scenario = scenario;
  cfg.n = n;
  cfg.hr = hr;
  cfg.censor_target = censor;
  cfg.accrual_years = def.accrual_years;
  cfg.followup_years = def.followup_years;
  cfg.control_rate = def.control_rate;
  cfg.seed = seed;
  return cfg;
}

void run_grid(const StudyDefinition& def, std::uint64_t seed, unsigned workers,
              const std::vector<VariantPlan>& variants, SimulationReport& report,
              const std::optional<std::vector<TestSpec>>& battery_override =
                  std::nullopt) {
  std::map<std::tuple<int, double, double>, double> calib;
  for (int scenario : def.scenarios) {
    const std::vector<TestSpec> battery = battery_override
                                              ? *battery_override
                                              : def.tests.value_or(
                                                    default_battery(scenario));
    validate_battery(battery);
    for (double censor : def.censor_grid) {
      for (double hr : def.hr_grid) {
        const double mu = cached_censor_hazard(def, scenario, hr, censor,
                                               calib, &report.warnings);
        for (std::size_t n : def.n_grid) {
          evaluate_cell(def, cell_config(def, scenario, n, hr, censor, seed),
                        mu, battery, variants, workers, report);
        }
      }
    }
  }
}

FittedModel nominal_control(const StudyDefinition& def) {
  return FittedModel::from_params(DistributionFamily::Exponential,
                                  def.control_rate);
}

}  // namespace

SimulationReport run_study(const StudyDefinition& def, std::uint64_t seed,
                           unsigned workers) {
  SimulationReport report = make_report(def, seed, "grid");
  run_grid(def, seed, resolve_workers(workers),
           {{"", false, nominal_control(def)}}, report);
  return report;
}

SimulationReport cp_misspecification_sweep(const StudyDefinition& def,
                                           std::uint64_t seed,
                                           unsigned workers) {
  SimulationReport report = make_report(def, seed, "cp_sweep");
  std::map<std::tuple<int, double, double>, double> calib;
  for (int scenario : def.scenarios) {
    if (scenario != 3 && scenario != 5)
      throw InvalidInput("cp_misspecification_sweep: scenarios must be 3 or 5");
    const double k_true = scenario == 3 ? 1.0 : 3.0;
    const auto kind =
        scenario == 3 ? TestSpec::Kind::Early : TestSpec::Kind::Delayed;
    std::vector<TestSpec> battery;
    TestSpec os;
    os.kind = TestSpec::Kind::Oslrt;
    battery.push_back(os);
    TestSpec mos;
    mos.kind = TestSpec::Kind::MOslrt;
    battery.push_back(mos);
    TestSpec opt;
    opt.kind = kind;
    opt.k = k_true;
    opt.offset_tag = 0.0;
    battery.push_back(opt);
    for (double off : def.offsets) {
      TestSpec shifted;
      shifted.kind = kind;
      shifted.k = k_true + off;
      if (shifted.k < 0.0) {
        warn(&report.warnings, "cp sweep: shifted change-point clipped to 0");
        shifted.k = 0.0;
      }
      shifted.offset_tag = off;
      battery.push_back(shifted);
    }
    StudyDefinition sub = def;
    sub.scenarios = {scenario};
    run_grid(sub, seed, resolve_workers(workers),
             {{"", false, nominal_control(def)}}, report, battery);
  }
  return report;
}

SimulationReport control_variability_study(const StudyDefinition& def,
                                           std::uint64_t seed,
                                           unsigned workers) {
  SimulationReport report = make_report(def, seed, "control_variability");
  run_grid(def, seed, resolve_workers(workers),
           {{"fixed", false, nominal_control(def)},
            {"variable", true, nominal_control(def)}},
           report);
  return report;
}

SimulationReport misspecified_analysis_study(const StudyDefinition& def,
                                             std::uint64_t seed,
                                             unsigned workers) {
  SimulationReport report = make_report(def, seed, "misspecified_analysis");
  const FittedModel mis = def.analysis_control.value_or(
      FittedModel::from_params(DistributionFamily::LogLogistic, 1.7, 2.0));
  run_grid(def, seed, resolve_workers(workers),
           {{"well_specified", false, nominal_control(def)},
            {"misspecified", false, mis}},
           report);
  return report;
}

SimulationReport run_any_study(const StudyDefinition& def, std::uint64_t seed,
                               unsigned workers) {
  switch (def.type) {
    case StudyDefinition::Type::Grid: return run_study(def, seed, workers);
    case StudyDefinition::Type::CpSweep:
      return cp_misspecification_sweep(def, seed, workers);
    case StudyDefinition::Type::ControlVariability:
      return control_variability_study(def, seed, workers);
    case StudyDefinition::Type::MisspecifiedAnalysis:
      return misspecified_analysis_study(def, seed, workers);
  }
  throw InvalidInput("unknown study type");
}

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open output file: " + path);
  return out;
}

}  // namespace

void write_report_csv(const SimulationReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "study,variant,scenario,test,offset,n,hr,censor_target,replications,"
         "rejections,degenerate,rejection_rate,mc_se,mean_events,"
         "mean_censoring\n";
  for (const auto& c : report.cells) {
    out << report.study << ',' << csv_field(c.variant) << ',' << c.scenario
        << ',' << csv_field(c.test) << ',' << num(c.offset) << ',' << c.n
        << ',' << num(c.hr) << ',' << num(c.censor_target) << ','
        << c.replications << ',' << c.rejections << ',' << c.degenerate << ','
        << num(c.rejection_rate) << ',' << num(c.mc_se) << ','
        << num(c.mean_events) << ',' << num(c.mean_censoring) << '\n';
  }
}

void write_report_long_csv(const SimulationReport& report,
                           const std::string& path) {
  auto out = open_out(path);
  out << "scenario,censor_target,hr,variant,test,offset,n,value,mc_se\n";
  for (const auto& c : report.cells) {
    out << c.scenario << ',' << num(c.censor_target) << ',' << num(c.hr) << ','
        << csv_field(c.variant) << ',' << csv_field(c.test) << ','
        << num(c.offset) << ',' << c.n << ',' << num(c.rejection_rate) << ','
        << num(c.mc_se) << '\n';
  }
}

void write_report_json(const SimulationReport& report, const std::string& path) {
  nlohmann::json j;
  j["study"] = report.study;
  j["seed"] = report.seed;
  j["config"] = report.config;
  j["warnings"] = report.warnings;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"variant", c.variant},
                     {"scenario", c.scenario},
                     {"test", c.test},
                     {"offset", c.offset},
                     {"n", c.n},
                     {"hr", c.hr},
                     {"censor_target", c.censor_target},
                     {"replications", c.replications},
                     {"rejections", c.rejections},
                     {"degenerate", c.degenerate},
                     {"rejection_rate", c.rejection_rate},
                     {"mc_se", c.mc_se},
                     {"mean_events", c.mean_events},
                     {"mean_censoring", c.mean_censoring}});
  }
  j["cells"] = cells;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace onearm
