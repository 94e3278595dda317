#include "onearm/max_combo.hpp"

#include <algorithm>
#include <cmath>

#include "onearm/rng.hpp"

namespace onearm {

std::string ComboComponent::label() const {
  char buf[48];
  switch (kind) {
    case Kind::MOslrt:
      return "moslrt";
    case Kind::Early:
      std::snprintf(buf, sizeof(buf), "early(k=%g)", k);
      return buf;
    case Kind::Delayed:
      std::snprintf(buf, sizeof(buf), "delayed(k=%g)", k);
      return buf;
  }
  return "?";
}

ComboSpec ComboSpec::defaults() { return with_change_points({1.0, 3.0}, {3.0, 5.0}); }

ComboSpec ComboSpec::with_change_points(const std::vector<double>& early_k,
                                        const std::vector<double>& delayed_k) {
  ComboSpec spec;
  spec.components.push_back({ComboComponent::Kind::MOslrt, 0.0});
  for (double k : early_k)
    spec.components.push_back({ComboComponent::Kind::Early, k});
  for (double k : delayed_k)
    spec.components.push_back({ComboComponent::Kind::Delayed, k});
  return spec;
}

double expected_events(const SurvivalSample& sample, const FittedModel& control,
                       const ComboComponent& component) {
  sample.validate();
  double e = 0.0;
  switch (component.kind) {
    case ComboComponent::Kind::MOslrt:
      for (double t : sample.times) e += cum_hazard(control, t);
      break;
    case ComboComponent::Kind::Early: {
      const bool finite = std::isfinite(component.k);
      const double lam_k = finite ? cum_hazard(control, component.k) : 0.0;
      for (double t : sample.times) {
        if (t <= component.k) e += cum_hazard(control, t);
        if (finite && t >= component.k) e += lam_k;
      }
      break;
    }
    case ComboComponent::Kind::Delayed: {
      if (!std::isfinite(component.k)) break;  // empty window
      const double lam_k = cum_hazard(control, component.k);
      for (double t : sample.times)
        if (t > component.k) e += cum_hazard(control, t) - lam_k;
      break;
    }
  }
  return e;
}

CovarianceResult covariance_matrix(const std::vector<double>& expected,
                                   const std::vector<ComboComponent>& components,
                                   WarningList* warnings) {
  if (expected.size() != components.size())
    throw InvalidInput("covariance_matrix: size mismatch");
  CovarianceResult result;
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (expected[i] > 0.0)
      result.kept.push_back(i);
    else
      warn(warnings, "covariance_matrix: component " + components[i].label() +
                         " has zero expected events; dropped");
  }
  const std::size_t m = result.kept.size();
  result.matrix = Eigen::MatrixXd::Identity(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const auto& ca = components[result.kept[a]];
      const auto& cb = components[result.kept[b]];
      const double ea = expected[result.kept[a]];
      const double eb = expected[result.kept[b]];
      double rho = 0.0;
      const bool same_family = ca.kind == cb.kind;
      const bool involves_moslrt = ca.kind == ComboComponent::Kind::MOslrt ||
                                   cb.kind == ComboComponent::Kind::MOslrt;
      if (same_family || involves_moslrt)
        rho = std::sqrt(std::min(ea, eb) / std::max(ea, eb));
      result.matrix(a, b) = result.matrix(b, a) = std::min(rho, 1.0);
    }
  }
  return result;
}

namespace {

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov,
                                     WarningList* warnings) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double jitter = 1e-10; jitter <= 1.0000001e-6; jitter *= 10.0) {
    Eigen::MatrixXd bumped = cov;
    bumped.diagonal().array() += jitter;
    llt.compute(bumped);
    if (llt.info() == Eigen::Success) {
      warn(warnings, "covariance required a " + std::to_string(jitter) +
                         " diagonal jitter before Cholesky");
      return llt.matrixL();
    }
  }
  throw ComputationError("covariance matrix is not positive definite (jitter "
                         "ladder exhausted)");
}

// sqrt of the first 10 primes, generators of the Richtmyer sequence
constexpr double kGenerators[10] = {
    1.4142135623730951, 1.7320508075688772, 2.23606797749979,
    2.6457513110645907, 3.3166247903554,    3.605551275463989,
    4.123105625617661,  4.358898943540674,  4.795831523312719,
    5.385164807134504};

double clamp_prob(double p) { return std::min(1.0 - 1e-16, std::max(1e-16, p)); }

}  // namespace

MvnResult mvn_upper_orthant(double u, const Eigen::MatrixXd& cov,
                            const MvnOptions& options) {
  const int dim = static_cast<int>(cov.rows());
  if (dim == 0) throw InvalidInput("mvn_upper_orthant: empty covariance");
  if (dim > 10) throw InvalidInput("mvn_upper_orthant: dimension > 10");
  if (cov.cols() != dim || !cov.isApprox(cov.transpose(), 1e-10))
    throw InvalidInput("mvn_upper_orthant: covariance must be symmetric");
  if (!std::isfinite(u)) {
    if (u > 0.0) return {1.0, 0.0, 0};
    return {0.0, 0.0, 0};
  }
  if (dim == 1) return {normal_cdf(u), 0.0, 0};

  WarningList ignored;
  const Eigen::MatrixXd L = cholesky_with_jitter(cov, &ignored);

  Rng shift_rng(mix_seed({0x6d766e, options.seed}));
  constexpr int batches = 12;
  std::size_t points_per_batch = 512;
  std::size_t total_points = 0;
  MvnResult result;
  double e[10], y[10], w[10], delta[10];
  for (;;) {
    double batch_mean[batches];
    for (int b = 0; b < batches; ++b) {
      for (int j = 0; j < dim - 1; ++j) delta[j] = shift_rng.uniform();
      double sum = 0.0;
      for (std::size_t kpt = 1; kpt <= points_per_batch; ++kpt) {
        for (int j = 0; j < dim - 1; ++j) {
          double v = kpt * kGenerators[j] + delta[j];
          v -= std::floor(v);
          w[j] = std::fabs(2.0 * v - 1.0);  // baker transform
        }
        e[0] = normal_cdf(u / L(0, 0));
        double f = e[0];
        for (int i = 1; i < dim; ++i) {
          y[i - 1] = normal_quantile(clamp_prob(w[i - 1] * e[i - 1]));
          double partial = 0.0;
          for (int j = 0; j < i; ++j) partial += L(i, j) * y[j];
          e[i] = normal_cdf((u - partial) / L(i, i));
          f *= e[i];
        }
        sum += f;
      }
      batch_mean[b] = sum / points_per_batch;
      total_points += points_per_batch;
    }
    double mean = 0.0;
    for (int b = 0; b < batches; ++b) mean += batch_mean[b];
    mean /= batches;
    double var = 0.0;
    for (int b = 0; b < batches; ++b)
      var += (batch_mean[b] - mean) * (batch_mean[b] - mean);
    var /= batches * (batches - 1.0);
    result.prob = std::min(1.0, std::max(0.0, mean));
    result.std_error = std::sqrt(var);
    result.points = total_points;
    if (result.std_error <= options.target_se) break;
    if (total_points + 2 * batches * points_per_batch > options.max_points)
      break;
    points_per_batch *= 2;
  }
  return result;
}

double hochberg_p(std::vector<double> p_values) {
  if (p_values.empty()) throw InvalidInput("hochberg_p: empty list");
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0))
      throw InvalidInput("hochberg_p: p-values must lie in [0,1]");
  std::sort(p_values.begin(), p_values.end());
  const std::size_t m = p_values.size();
  double best = 1.0;
  for (std::size_t j = 0; j < m; ++j)
    best = std::min(best, (m - j) * p_values[j]);
  return best;
}

ComboResult max_combo_test(const SurvivalSample& sample,
                           const FittedModel& control, const ComboSpec& spec,
                           const MvnOptions& options, double alpha,
                           bool raw_max) {
  if (spec.components.empty())
    throw InvalidInput("max_combo_test: empty component list");
  ComboResult result;
  std::vector<double> expected_all;
  std::vector<ComboComponent> kept;
  for (const auto& comp : spec.components) {
    TestOutcome outcome;
    try {
      switch (comp.kind) {
        case ComboComponent::Kind::MOslrt:
          outcome = moslrt(sample, control, alpha);
          break;
        case ComboComponent::Kind::Early:
          outcome = z_early(sample, control, comp.k, alpha);
          break;
        case ComboComponent::Kind::Delayed:
          outcome = z_delayed(sample, control, comp.k, alpha);
          break;
      }
    } catch (const DegenerateStatistic& e) {
      warn(&result.warnings,
           std::string("max-combo: dropped component: ") + e.what());
      continue;
    }
    kept.push_back(comp);
    result.statistics.push_back(outcome.statistic);
    result.p_values.push_back(outcome.p_one_sided);
    expected_all.push_back(expected_events(sample, control, comp));
  }
  if (kept.empty())
    throw DegenerateStatistic("max-combo: every component is degenerate");

  CovarianceResult cov = covariance_matrix(expected_all, kept, &result.warnings);
  if (cov.kept.size() != kept.size()) {
    std::vector<ComboComponent> c2;
    std::vector<double> s2, p2, e2;
    for (std::size_t i : cov.kept) {
      c2.push_back(kept[i]);
      s2.push_back(result.statistics[i]);
      p2.push_back(result.p_values[i]);
      e2.push_back(expected_all[i]);
    }
    kept = std::move(c2);
    result.statistics = std::move(s2);
    result.p_values = std::move(p2);
    expected_all = std::move(e2);
  }
  if (kept.empty())
    throw DegenerateStatistic("max-combo: every component is degenerate");
  result.components = kept;
  result.expected = expected_all;
  result.covariance = cov.matrix;

  double combined = -std::numeric_limits<double>::infinity();
  for (double z : result.statistics)
    combined = std::max(combined, raw_max ? z : -z);
  result.statistic = combined;

  result.p_hochberg = hochberg_p(result.p_values);
  MvnResult orthant = mvn_upper_orthant(combined, cov.matrix, options);
  result.p_exact = std::min(1.0, std::max(0.0, 1.0 - orthant.prob));
  result.p_exact_se = orthant.std_error;
  return result;
}

}  // namespace onearm
