#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "onearm/common.hpp"

namespace onearm {

enum class DistributionFamily { Exponential, Weibull, LogLogistic, LogNormal, Gamma };

constexpr std::array<DistributionFamily, 5> kAllFamilies = {
    DistributionFamily::Exponential, DistributionFamily::Weibull,
    DistributionFamily::LogLogistic, DistributionFamily::LogNormal,
    DistributionFamily::Gamma};

int parameter_count(DistributionFamily family);
std::string family_name(DistributionFamily family);
std::optional<DistributionFamily> family_from_name(std::string_view name);

/// Observed times and event indicators of one group, one time unit per run.
struct SurvivalSample {
  std::vector<double> times;
  std::vector<std::uint8_t> events;  // 1 = event, 0 = censored

  std::size_t size() const { return times.size(); }
  std::size_t event_count() const;
  double max_time() const;
  void validate() const;  // equal lengths >= 1, times >= 0, events binary
};

/// A parametric survival model for the external control group.
/// Parameter layout: Exponential {rate}; Weibull/LogLogistic/Gamma
/// {shape, scale}; LogNormal {meanlog, sdlog}. loglik/aic are NaN for
/// user-supplied parameters (n_fit == 0).
struct FittedModel {
  DistributionFamily family = DistributionFamily::Exponential;
  std::array<double, 2> params{1.0, 0.0};
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double aic = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_fit = 0;
  bool converged = true;

  static FittedModel from_params(DistributionFamily family, double p1,
                                 double p2 = 0.0);
  void validate() const;
};

struct ModelEval {
  double hazard;
  double cum_hazard;
  double survival;
};

/// (lambda0, Lambda0, S0) at t >= 0.
ModelEval eval_model(const FittedModel& model, double t);

/// Lambda0(t) alone; shares eval_model's closed forms.
double cum_hazard(const FittedModel& model, double t);

/// Right inverse of Lambda0: closed form for Exponential/Weibull/LogLogistic,
/// bracketed bisection (rel tol 1e-10) for LogNormal/Gamma.
double inverse_cum_hazard(const FittedModel& model, double u);

/// Integral of S0 over [0, tau]: closed form for Exponential, adaptive
/// Simpson (abs tol 1e-9) otherwise.
double rmst_parametric(const FittedModel& model, double tau);

/// Censored maximum likelihood over the family's parameter space, Nelder-Mead
/// in log-parameter coordinates (meanlog stays untransformed), initialized
/// from method-of-moments on the uncensored times. Non-convergence is
/// reported through `converged` plus a warning; the best iterate is kept.
FittedModel fit_mle(const SurvivalSample& sample, DistributionFamily family,
                    WarningList* warnings = nullptr);

/// Censored log-likelihood of `model` on `sample` (the objective fit_mle
/// maximizes).
double censored_loglik(const FittedModel& model, const SurvivalSample& sample);

}  // namespace onearm
