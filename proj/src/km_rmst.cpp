#include "onearm/km_rmst.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace onearm {

double KMCurve::survival_at(double t) const {
  double s = 1.0;
  for (std::size_t j = 0; j < event_times.size(); ++j) {
    if (event_times[j] > t) break;
    s = survival[j];
  }
  return s;
}

KMCurve km_estimate(const SurvivalSample& sample) {
  sample.validate();
  std::vector<std::size_t> idx(sample.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return sample.times[a] < sample.times[b];
  });

  KMCurve curve;
  curve.n_total = sample.size();
  curve.max_time = sample.times[idx.back()];
  double at_risk = static_cast<double>(sample.size());
  double surv = 1.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double t = sample.times[idx[i]];
    double d = 0.0, group = 0.0;
    while (i < idx.size() && sample.times[idx[i]] == t) {
      d += sample.events[idx[i]];
      group += 1.0;
      ++i;
    }
    // ties: events are resolved against the full risk set at t, censored
    // observations leave afterwards
    if (d > 0.0) {
      surv *= 1.0 - d / at_risk;
      curve.event_times.push_back(t);
      curve.at_risk.push_back(at_risk);
      curve.events.push_back(d);
      curve.survival.push_back(surv);
    }
    at_risk -= group;
  }
  return curve;
}

namespace {

struct Knots {
  std::vector<double> t;  // {0, event times <= tau, tau}
  std::vector<double> s;  // KM value at each knot
  std::size_t n_events;   // event knots (excluding 0 and tau)
};

Knots knot_grid(const KMCurve& curve, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw InvalidInput("rmst: tau must be finite and > 0");
  if (tau > curve.max_time)
    throw InvalidInput("rmst: tau exceeds observed follow-up");
  Knots k;
  k.t.push_back(0.0);
  k.s.push_back(1.0);
  for (std::size_t j = 0; j < curve.event_times.size(); ++j) {
    if (curve.event_times[j] > tau) break;
    k.t.push_back(curve.event_times[j]);
    k.s.push_back(curve.survival[j]);
  }
  k.n_events = k.t.size() - 1;
  if (k.t.back() < tau) {
    k.t.push_back(tau);
    k.s.push_back(k.s.back());
  }
  return k;
}

double segment_area(const Knots& k, std::size_t j, RmstIntegration mode) {
  const double width = k.t[j + 1] - k.t[j];
  return mode == RmstIntegration::Trapezoid
             ? 0.5 * width * (k.s[j] + k.s[j + 1])
             : width * k.s[j];
}

}  // namespace

double rmst_km(const KMCurve& curve, double tau, RmstIntegration mode) {
  const Knots k = knot_grid(curve, tau);
  double area = 0.0;
  for (std::size_t j = 0; j + 1 < k.t.size(); ++j)
    area += segment_area(k, j, mode);
  return area;
}

double greenwood_variance(const KMCurve& curve, double tau,
                          RmstIntegration mode, WarningList* warnings) {
  const Knots k = knot_grid(curve, tau);
  // suffix integrals from each knot to tau
  std::vector<double> tail(k.t.size(), 0.0);
  for (std::size_t j = k.t.size() - 1; j-- > 0;)
    tail[j] = tail[j + 1] + segment_area(k, j, mode);
  double var = 0.0;
  for (std::size_t j = 0; j < k.n_events; ++j) {
    const double n = curve.at_risk[j];
    const double d = curve.events[j];
    if (n == d) {
      warn(warnings,
           "greenwood_variance: risk set fully depleted at t=" +
               std::to_string(k.t[j + 1]) + "; term skipped");
      continue;
    }
    var += tail[j + 1] * tail[j + 1] * d / (n * (n - d));
  }
  return var;
}

double select_tau(const SurvivalSample& experimental, double control_max_time) {
  if (!(control_max_time > 0.0))
    throw InvalidInput("select_tau: control maximum time must be > 0");
  return std::min(experimental.max_time(), control_max_time);
}

TestOutcome drmst_test(const SurvivalSample& sample, const FittedModel& control,
                       double tau, double alpha, RmstIntegration mode,
                       WarningList* warnings) {
  const KMCurve curve = km_estimate(sample);
  const double rmst1 = rmst_km(curve, tau, mode);
  const double var = greenwood_variance(curve, tau, mode, warnings);
  if (!(var > 0.0))
    throw DegenerateStatistic("drmst: zero variance (no usable events before tau)");
  const double rmst0 = rmst_parametric(control, tau);
  TestOutcome out;
  out.label = "rmst";
  out.statistic = (rmst1 - rmst0) / std::sqrt(var);
  out.p_one_sided = 1.0 - normal_cdf(out.statistic);
  double events = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i)
    if (sample.events[i] && sample.times[i] <= tau) events += 1.0;
  out.observed = events;
  out.expected = rmst0;
  out.alpha = alpha;
  return out;
}

}  // namespace onearm
