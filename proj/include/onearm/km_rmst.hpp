#pragma once

#include <cstddef>
#include <vector>

#include "onearm/score_tests.hpp"

namespace onearm {

/// Product-limit estimate. Arrays are aligned over the distinct event times;
/// the implicit point (0, 1) precedes them. `max_time` is the largest
/// observed time (event or censored), the end of estimable follow-up.
struct KMCurve {
  std::vector<double> event_times;
  std::vector<double> at_risk;
  std::vector<double> events;
  std::vector<double> survival;
  std::size_t n_total = 0;
  double max_time = 0.0;

  /// Step value at t (right-continuous).
  double survival_at(double t) const;
};

enum class RmstIntegration {
  Trapezoid,  // trapezoid over the KM knots (the reported estimator)
  StepExact   // exact integral of the step function (sensitivity mode)
};

KMCurve km_estimate(const SurvivalSample& sample);

/// Integral of the KM curve over [0, tau]; knots are {0, event times <= tau,
/// tau} with the last step value carried to tau. Requires tau <= max_time.
double rmst_km(const KMCurve& curve, double tau,
               RmstIntegration mode = RmstIntegration::Trapezoid);

/// Greenwood plug-in variance of the restricted mean: sum over event times
/// X_i <= tau of [int_{X_i}^{tau} S]^2 d_i / (n_i (n_i - d_i)), inner
/// integrals by the same rule as rmst_km. Terms with n_i == d_i are skipped
/// with a warning.
double greenwood_variance(const KMCurve& curve, double tau,
                          RmstIntegration mode = RmstIntegration::Trapezoid,
                          WarningList* warnings = nullptr);

/// Huang-Kuan horizon: min of the experimental maximum observed time and the
/// control group's maximum time.
double select_tau(const SurvivalSample& experimental, double control_max_time);

/// One-sample RMST difference test: (RMST1_hat - RMST0) / sqrt(Var), upper
/// tail. `expected` in the outcome carries RMST0.
TestOutcome drmst_test(const SurvivalSample& sample, const FittedModel& control,
                       double tau, double alpha = 0.05,
                       RmstIntegration mode = RmstIntegration::Trapezoid,
                       WarningList* warnings = nullptr);

}  // namespace onearm
