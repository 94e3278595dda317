#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "onearm/score_tests.hpp"

namespace onearm {

/// One component of the combination test.
struct ComboComponent {
  enum class Kind { MOslrt, Early, Delayed };
  Kind kind = Kind::MOslrt;
  double k = 0.0;

  std::string label() const;
};

struct ComboSpec {
  std::vector<ComboComponent> components;

  /// mOSLRT, EE(1), EE(3), DE(3), DE(5).
  static ComboSpec defaults();
  static ComboSpec with_change_points(const std::vector<double>& early_k,
                                      const std::vector<double>& delayed_k);
};

/// Expected-event count entering the covariance ratios:
///   mOSLRT: sum Lambda0(X_i)
///   Early(k): sum Lambda0(X_i) I(X_i <= k) + Lambda0(k) I(X_i >= k)
///   Delayed(k): sum [Lambda0(X_i) - Lambda0(k)] I(X_i > k)
double expected_events(const SurvivalSample& sample, const FittedModel& control,
                       const ComboComponent& component);

struct CovarianceResult {
  Eigen::MatrixXd matrix;          // over the kept components
  std::vector<std::size_t> kept;   // indices into the input component list
};

/// Correlation matrix from expected-event ratios: within-family pairs (and
/// pairs involving mOSLRT) get sqrt(E_small/E_large); early-delayed cross
/// terms are zero. Components with E <= 0 are dropped with a warning.
CovarianceResult covariance_matrix(const std::vector<double>& expected,
                                   const std::vector<ComboComponent>& components,
                                   WarningList* warnings = nullptr);

struct MvnOptions {
  double target_se = 1e-4;
  std::size_t max_points = 1000000;
  std::uint64_t seed = 0;
};

struct MvnResult {
  double prob = 0.0;
  double std_error = 0.0;
  std::size_t points = 0;
};

/// P(U_i <= u for all i), U ~ N(0, cov), by randomized quasi-Monte Carlo with
/// sequential conditioning on the Cholesky factor (jittered by 1e-10*I,
/// escalating tenfold up to 1e-6, if factorization fails). Dimension <= 10.
MvnResult mvn_upper_orthant(double u, const Eigen::MatrixXd& cov,
                            const MvnOptions& options = {});

/// Hochberg step-up combination p-value: min over j of (m-j+1) p_(j),
/// capped at 1.
double hochberg_p(std::vector<double> p_values);

struct ComboResult {
  std::vector<ComboComponent> components;  // non-degenerate ones
  std::vector<double> statistics;
  std::vector<double> p_values;
  std::vector<double> expected;
  Eigen::MatrixXd covariance;
  double statistic = 0.0;  // max_i(-Z_i); raw max_i(Z_i) when raw_max is set
  double p_hochberg = 1.0;
  double p_exact = 1.0;
  double p_exact_se = 0.0;
  WarningList warnings;
};

/// Full combination test. Components whose statistic is degenerate are
/// dropped with a warning; evaluation fails only when all of them are.
/// Each component rejects for negative Z, so the combination aggregates
/// max(-Z_i); `raw_max` switches to the literal max(Z_i) reading for
/// comparison.
ComboResult max_combo_test(const SurvivalSample& sample,
                           const FittedModel& control, const ComboSpec& spec,
                           const MvnOptions& options = {}, double alpha = 0.05,
                           bool raw_max = false);

}  // namespace onearm
