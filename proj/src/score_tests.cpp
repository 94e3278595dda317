#include "onearm/score_tests.hpp"

#include <cmath>
#include <vector>

namespace onearm {

namespace {

std::vector<double> control_cum_hazards(const SurvivalSample& sample,
                                        const FittedModel& control) {
  sample.validate();
  std::vector<double> lam(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i)
    lam[i] = cum_hazard(control, sample.times[i]);
  return lam;
}

TestOutcome make_outcome(std::string label, double num, double info,
                         double observed, double alpha) {
  if (!(info > 0.0) || !std::isfinite(info))
    throw DegenerateStatistic(label + ": nonpositive information");
  TestOutcome out;
  out.label = std::move(label);
  out.statistic = num / std::sqrt(info);
  out.p_one_sided = normal_cdf(out.statistic);
  out.observed = observed;
  out.expected = info;
  out.alpha = alpha;
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

}  // namespace

ChangePointSpec ChangePointSpec::early(double k) {
  ChangePointSpec s{Kind::Early, k, 0.0};
  s.validate();
  return s;
}

ChangePointSpec ChangePointSpec::middle(double k1, double k2) {
  ChangePointSpec s{Kind::Middle, k1, k2};
  s.validate();
  return s;
}

ChangePointSpec ChangePointSpec::delayed(double k) {
  ChangePointSpec s{Kind::Delayed, k, 0.0};
  s.validate();
  return s;
}

void ChangePointSpec::validate() const {
  switch (kind) {
    case Kind::Early:
      if (std::isnan(k) || k < 0.0)
        throw InvalidInput("early change-point must be >= 0");
      break;
    case Kind::Delayed:
      if (!std::isfinite(k) || k < 0.0)
        throw InvalidInput("delayed change-point must be finite and >= 0");
      break;
    case Kind::Middle:
      if (std::isnan(k) || k < 0.0 || std::isnan(k2) || !(k < k2))
        throw InvalidInput("middle window requires 0 <= k1 < k2");
      break;
    default:
      break;
  }
}

TestOutcome oslrt(const SurvivalSample& sample, const FittedModel& control,
                  double alpha) {
  const auto lam = control_cum_hazards(sample, control);
  double num = 0.0, events = 0.0, expected = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    num += sample.events[i] - lam[i];
    events += sample.events[i];
    expected += lam[i];
  }
  if (!(expected > 0.0))
    throw DegenerateStatistic("oslrt: expected event count is zero");
  auto out = make_outcome("oslrt", num, expected, events, alpha);
  return out;
}

TestOutcome moslrt(const SurvivalSample& sample, const FittedModel& control,
                   double alpha) {
  const auto lam = control_cum_hazards(sample, control);
  double events = 0.0, expected = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    events += sample.events[i];
    expected += lam[i];
  }
  if (!(events + expected > 0.0))
    throw DegenerateStatistic("moslrt: O + E is zero");
  auto out = make_outcome("moslrt", events - expected,
                          0.5 * (events + expected), events, alpha);
  out.expected = expected;
  return out;
}

TestOutcome z_early(const SurvivalSample& sample, const FittedModel& control,
                    double k, double alpha) {
  ChangePointSpec{ChangePointSpec::Kind::Early, k, 0.0}.validate();
  const auto lam = control_cum_hazards(sample, control);
  const bool k_finite = std::isfinite(k);
  const double lam_k = k_finite ? cum_hazard(control, k) : 0.0;
  double num = 0.0, info = 0.0, events = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double x = sample.times[i];
    if (x <= k) {
      num += sample.events[i] - lam[i];
      info += lam[i];
      events += sample.events[i];
    }
    if (k_finite && x >= k) {
      num -= lam_k;
      info += lam_k;
    }
  }
  return make_outcome("early(k=" + fmt(k) + ")", num, info, events, alpha);
}

TestOutcome z_middle(const SurvivalSample& sample, const FittedModel& control,
                     double k1, double k2, double alpha) {
  ChangePointSpec{ChangePointSpec::Kind::Middle, k1, k2}.validate();
  const auto lam = control_cum_hazards(sample, control);
  const double lam_k1 = cum_hazard(control, k1);
  const bool k2_finite = std::isfinite(k2);
  const double lam_k2 = k2_finite ? cum_hazard(control, k2) : 0.0;
  double num = 0.0, info = 0.0, events = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double x = sample.times[i];
    if (x > k1 && x <= k2) {
      num += sample.events[i] - lam[i];
      events += sample.events[i];
    }
    if (x >= k1 && x <= k2) info += lam[i];
    if (x >= k1) {
      num += lam_k1;
      info -= lam_k1;
    }
    if (k2_finite && x >= k2) {
      num -= lam_k2;
      info += lam_k2;
    }
  }
  return make_outcome("middle(k1=" + fmt(k1) + ",k2=" + fmt(k2) + ")", num,
                      info, events, alpha);
}

TestOutcome z_delayed(const SurvivalSample& sample, const FittedModel& control,
                      double k, double alpha) {
  ChangePointSpec{ChangePointSpec::Kind::Delayed, k, 0.0}.validate();
  const auto lam = control_cum_hazards(sample, control);
  const double lam_k = cum_hazard(control, k);
  double num = 0.0, info = 0.0, events = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample.times[i] > k) {
      any = true;
      num += sample.events[i] - lam[i] + lam_k;
      info += lam[i] - lam_k;
      events += sample.events[i];
    }
  }
  const std::string label = "delayed(k=" + fmt(k) + ")";
  if (!any) throw DegenerateStatistic(label + ": no observation beyond k");
  return make_outcome(label, num, info, events, alpha);
}

TestOutcome z_crossing(const SurvivalSample& sample, const FittedModel& control,
                       double alpha) {
  const auto lam = control_cum_hazards(sample, control);
  double num = 0.0, info = 0.0, events = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (!(lam[i] > 0.0))
      throw DegenerateStatistic("crossing: Lambda0(X_i) = 0 (log singularity)");
    const double d = sample.events[i];
    const double ln = std::log(lam[i]);
    num += d - (lam[i] - d) * ln;
    info -= (d - lam[i] * (1.0 + ln)) * ln;
    events += d;
  }
  return make_outcome("crossing", num, info, events, alpha);
}

double crossing_time(const FittedModel& control, double beta) {
  if (!std::isfinite(beta) || beta == 0.0)
    throw InvalidInput("crossing_time: beta must be nonzero");
  return inverse_cum_hazard(control, std::exp(-beta / std::expm1(beta)));
}

TestOutcome score_test(const SurvivalSample& sample, const FittedModel& control,
                       const ChangePointSpec& spec, double alpha) {
  switch (spec.kind) {
    case ChangePointSpec::Kind::PH:
      return oslrt(sample, control, alpha);
    case ChangePointSpec::Kind::Early:
      return z_early(sample, control, spec.k, alpha);
    case ChangePointSpec::Kind::Middle:
      return z_middle(sample, control, spec.k, spec.k2, alpha);
    case ChangePointSpec::Kind::Delayed:
      return z_delayed(sample, control, spec.k, alpha);
    case ChangePointSpec::Kind::Crossing:
      return z_crossing(sample, control, alpha);
  }
  throw InvalidInput("score_test: unknown kind");
}

}  // namespace onearm
