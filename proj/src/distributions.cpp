#include "onearm/distributions.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace onearm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_log_time(DistributionFamily f) {
  return f != DistributionFamily::Exponential;
}

// log of the standard normal survival function, stable in the far tail.
double log_normal_sf(double z) {
  if (z < 30.0) return std::log(0.5 * std::erfc(z / std::sqrt(2.0)));
  return -0.5 * z * z - std::log(z) - 0.5 * std::log(2.0 * M_PI) +
         std::log1p(-1.0 / (z * z));
}

// log of the regularized upper incomplete gamma Q(a, x).
double log_gamma_sf(double a, double x) {
  double q = Eigen::numext::igammac(a, x);
  if (q > 1e-290) return std::log(q);
  // leading term of the large-x asymptotic expansion
  return (a - 1.0) * std::log(x) - x - std::lgamma(a);
}

}  // namespace

int parameter_count(DistributionFamily family) {
  return family == DistributionFamily::Exponential ? 1 : 2;
}

std::string family_name(DistributionFamily family) {
  switch (family) {
    case DistributionFamily::Exponential: return "exponential";
    case DistributionFamily::Weibull: return "weibull";
    case DistributionFamily::LogLogistic: return "loglogistic";
    case DistributionFamily::LogNormal: return "lognormal";
    case DistributionFamily::Gamma: return "gamma";
  }
  return "?";
}

std::optional<DistributionFamily> family_from_name(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  if (s == "exponential" || s == "exp") return DistributionFamily::Exponential;
  if (s == "weibull") return DistributionFamily::Weibull;
  if (s == "loglogistic" || s == "log-logistic") return DistributionFamily::LogLogistic;
  if (s == "lognormal" || s == "log-normal") return DistributionFamily::LogNormal;
  if (s == "gamma") return DistributionFamily::Gamma;
  return std::nullopt;
}

std::size_t SurvivalSample::event_count() const {
  return static_cast<std::size_t>(
      std::count(events.begin(), events.end(), std::uint8_t{1}));
}

double SurvivalSample::max_time() const {
  if (times.empty()) throw InvalidInput("empty sample has no maximum time");
  return *std::max_element(times.begin(), times.end());
}

void SurvivalSample::validate() const {
  if (times.empty() || times.size() != events.size())
    throw InvalidInput("sample needs equal-length nonempty times and events");
  for (double t : times)
    if (!(t >= 0.0) || !std::isfinite(t))
      throw InvalidInput("sample times must be finite and nonnegative");
  for (auto e : events)
    if (e > 1) throw InvalidInput("event indicators must be 0 or 1");
}

FittedModel FittedModel::from_params(DistributionFamily family, double p1,
                                     double p2) {
  FittedModel m;
  m.family = family;
  m.params = {p1, p2};
  m.n_fit = 0;
  m.validate();
  return m;
}

void FittedModel::validate() const {
  auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
  switch (family) {
    case DistributionFamily::Exponential:
      if (!positive(params[0])) throw InvalidInput("exponential rate must be > 0");
      break;
    case DistributionFamily::LogNormal:
      if (!std::isfinite(params[0]))
        throw InvalidInput("lognormal meanlog must be finite");
      if (!positive(params[1])) throw InvalidInput("lognormal sdlog must be > 0");
      break;
    default:
      if (!positive(params[0]) || !positive(params[1]))
        throw InvalidInput(family_name(family) + " shape and scale must be > 0");
  }
}

ModelEval eval_model(const FittedModel& model, double t) {
  if (!std::isfinite(t) || t < 0.0)
    throw InvalidInput("eval_model: t must be finite and >= 0");
  model.validate();
  ModelEval out{0.0, 0.0, 1.0};
  switch (model.family) {
    case DistributionFamily::Exponential: {
      const double rate = model.params[0];
      out.hazard = rate;
      out.cum_hazard = rate * t;
      break;
    }
    case DistributionFamily::Weibull: {
      const double a = model.params[0], s = model.params[1];
      out.cum_hazard = std::pow(t / s, a);
      out.hazard = (a / s) * std::pow(t / s, a - 1.0);
      break;
    }
    case DistributionFamily::LogLogistic: {
      const double a = model.params[0], s = model.params[1];
      const double w = std::pow(t / s, a);
      out.cum_hazard = std::log1p(w);
      out.hazard = (a / s) * std::pow(t / s, a - 1.0) / (1.0 + w);
      break;
    }
    case DistributionFamily::LogNormal: {
      const double mu = model.params[0], sigma = model.params[1];
      if (t == 0.0) break;
      const double z = (std::log(t) - mu) / sigma;
      const double log_sf = log_normal_sf(z);
      out.cum_hazard = -log_sf;
      const double log_pdf = -std::log(t * sigma) - 0.5 * std::log(2.0 * M_PI) -
                             0.5 * z * z;
      out.hazard = std::exp(log_pdf - log_sf);
      break;
    }
    case DistributionFamily::Gamma: {
      const double a = model.params[0], s = model.params[1];
      if (t == 0.0) {
        if (a < 1.0) out.hazard = kInf;
        else if (a == 1.0) out.hazard = 1.0 / s;
        break;
      }
      const double x = t / s;
      const double log_sf = log_gamma_sf(a, x);
      out.cum_hazard = -log_sf;
      const double log_pdf =
          (a - 1.0) * std::log(t) - x - std::lgamma(a) - a * std::log(s);
      out.hazard = std::exp(log_pdf - log_sf);
      break;
    }
  }
  out.survival = std::exp(-out.cum_hazard);
  return out;
}

double cum_hazard(const FittedModel& model, double t) {
  return eval_model(model, t).cum_hazard;
}

double inverse_cum_hazard(const FittedModel& model, double u) {
  if (!std::isfinite(u) || u < 0.0)
    throw InvalidInput("inverse_cum_hazard: u must be finite and >= 0");
  model.validate();
  if (u == 0.0) return 0.0;
  switch (model.family) {
    case DistributionFamily::Exponential:
      return u / model.params[0];
    case DistributionFamily::Weibull:
      return model.params[1] * std::pow(u, 1.0 / model.params[0]);
    case DistributionFamily::LogLogistic:
      return model.params[1] * std::pow(std::expm1(u), 1.0 / model.params[0]);
    default:
      break;
  }
  // LogNormal / Gamma: geometric bracket expansion then bisection.
  double hi = 1.0;
  int guard = 0;
  while (cum_hazard(model, hi) < u) {
    hi *= 2.0;
    if (++guard > 1024) throw ComputationError("inverse_cum_hazard: no bracket");
  }
  double lo = 0.0;
  while (hi - lo > 1e-10 * std::max(hi, 1.0)) {
    double mid = 0.5 * (lo + hi);
    if (cum_hazard(model, mid) < u)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double rmst_parametric(const FittedModel& model, double tau) {
  if (!std::isfinite(tau) || tau <= 0.0)
    throw InvalidInput("rmst_parametric: tau must be finite and > 0");
  model.validate();
  if (model.family == DistributionFamily::Exponential) {
    const double rate = model.params[0];
    return -std::expm1(-rate * tau) / rate;
  }
  return adaptive_simpson(
      [&](double t) { return eval_model(model, t).survival; }, 0.0, tau, 1e-9);
}

double censored_loglik(const FittedModel& model, const SurvivalSample& sample) {
  const double* p = model.params.data();
  double ll = 0.0;
  switch (model.family) {
    case DistributionFamily::Exponential: {
      const double lr = std::log(p[0]);
      for (std::size_t i = 0; i < sample.size(); ++i) {
        if (sample.events[i]) ll += lr;
        ll -= p[0] * sample.times[i];
      }
      break;
    }
    case DistributionFamily::Weibull: {
      const double a = p[0], s = p[1];
      for (std::size_t i = 0; i < sample.size(); ++i) {
        const double t = sample.times[i];
        if (sample.events[i])
          ll += std::log(a / s) + (a - 1.0) * std::log(t / s);
        if (t > 0.0) ll -= std::pow(t / s, a);
      }
      break;
    }
    case DistributionFamily::LogLogistic: {
      const double a = p[0], s = p[1];
      for (std::size_t i = 0; i < sample.size(); ++i) {
        const double t = sample.times[i];
        if (t <= 0.0) continue;
        const double w = a * std::log(t / s);
        const double lam0 = softplus(w);  // Lambda(t) = log(1 + (t/s)^a)
        if (sample.events[i])
          ll += std::log(a / s) + (a - 1.0) * std::log(t / s) - lam0;
        ll -= lam0;
      }
      break;
    }
    case DistributionFamily::LogNormal: {
      const double mu = p[0], sigma = p[1];
      for (std::size_t i = 0; i < sample.size(); ++i) {
        const double t = sample.times[i];
        if (t <= 0.0) continue;
        const double z = (std::log(t) - mu) / sigma;
        if (sample.events[i])
          ll += -std::log(t * sigma) - 0.5 * std::log(2.0 * M_PI) - 0.5 * z * z;
        else
          ll += log_normal_sf(z);
      }
      break;
    }
    case DistributionFamily::Gamma: {
      const double a = p[0], s = p[1];
      for (std::size_t i = 0; i < sample.size(); ++i) {
        const double t = sample.times[i];
        if (t <= 0.0) continue;
        if (sample.events[i])
          ll += (a - 1.0) * std::log(t) - t / s - std::lgamma(a) -
                a * std::log(s);
        else
          ll += log_gamma_sf(a, t / s);
      }
      break;
    }
  }
  return ll;
}

namespace {

struct Moments {
  double log_mean = 0.0, log_sd = 0.5;
  double mean = 1.0, var = 1.0;
};

Moments uncensored_moments(const SurvivalSample& sample) {
  std::vector<double> u;
  for (std::size_t i = 0; i < sample.size(); ++i)
    if (sample.events[i] && sample.times[i] > 0.0) u.push_back(sample.times[i]);
  Moments m;
  if (u.empty()) return m;
  m.mean = std::accumulate(u.begin(), u.end(), 0.0) / u.size();
  double v = 0.0, lm = 0.0;
  for (double t : u) lm += std::log(t);
  lm /= u.size();
  double lv = 0.0;
  for (double t : u) {
    v += (t - m.mean) * (t - m.mean);
    lv += (std::log(t) - lm) * (std::log(t) - lm);
  }
  m.var = u.size() > 1 ? v / (u.size() - 1) : m.mean * m.mean;
  m.log_mean = lm;
  m.log_sd = u.size() > 1 ? std::sqrt(lv / (u.size() - 1)) : 0.5;
  if (!(m.log_sd > 1e-8)) m.log_sd = 0.5;
  if (!(m.var > 0.0)) m.var = std::max(m.mean * m.mean, 1e-8);
  return m;
}

std::vector<double> initial_point(const SurvivalSample& sample,
                                  DistributionFamily family) {
  const Moments m = uncensored_moments(sample);
  switch (family) {
    case DistributionFamily::Exponential: {
      double total = std::accumulate(sample.times.begin(), sample.times.end(), 0.0);
      double rate = total > 0.0 ? sample.event_count() / total : 1.0;
      return {std::log(std::max(rate, 1e-10))};
    }
    case DistributionFamily::Weibull: {
      double shape = 1.2826 / m.log_sd;                      // pi/sqrt(6)/sd(logT)
      double scale = std::exp(m.log_mean + 0.5772156649 / shape);
      return {std::log(shape), std::log(scale)};
    }
    case DistributionFamily::LogLogistic: {
      double shape = 1.8138 / m.log_sd;                      // pi/sqrt(3)/sd(logT)
      return {std::log(shape), m.log_mean};
    }
    case DistributionFamily::LogNormal:
      return {m.log_mean, std::log(m.log_sd)};
    case DistributionFamily::Gamma: {
      double shape = m.mean * m.mean / m.var;
      double scale = m.var / m.mean;
      return {std::log(std::max(shape, 1e-6)), std::log(std::max(scale, 1e-10))};
    }
  }
  return {0.0};
}

FittedModel decode(DistributionFamily family, const std::vector<double>& x) {
  FittedModel m;
  m.family = family;
  switch (family) {
    case DistributionFamily::Exponential:
      m.params = {std::exp(x[0]), 0.0};
      break;
    case DistributionFamily::LogNormal:
      m.params = {x[0], std::exp(x[1])};
      break;
    default:
      m.params = {std::exp(x[0]), std::exp(x[1])};
  }
  return m;
}

struct NmResult {
  std::vector<double> x;
  double f = kInf;
  bool converged = false;
  int evals = 0;
};

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5,
// shrink 0.5); stops on simplex diameter < 1e-8 or 10,000 evaluations.
NmResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                     std::vector<double> x0) {
  const std::size_t n = x0.size();
  const int max_evals = 10000;
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    double v = f(x);
    return std::isfinite(v) ? v : 1e300;
  };
  std::vector<std::vector<double>> vx(n + 1, x0);
  std::vector<double> vf(n + 1);
  for (std::size_t i = 0; i < n; ++i) vx[i + 1][i] += 0.25;
  for (std::size_t i = 0; i <= n; ++i) vf[i] = eval(vx[i]);

  auto order = [&]() {
    std::vector<std::size_t> idx(n + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return vf[a] < vf[b]; });
    std::vector<std::vector<double>> nx(n + 1);
    std::vector<double> nf(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      nx[i] = vx[idx[i]];
      nf[i] = vf[idx[i]];
    }
    vx = std::move(nx);
    vf = std::move(nf);
  };
  auto diameter = [&]() {
    double d = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        d = std::max(d, std::fabs(vx[i][j] - vx[0][j]));
    return d;
  };

  order();
  while (evals < max_evals) {
    if (diameter() < 1e-8) break;
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += vx[i][j] / n;
    auto blend = [&](double coef) {
      std::vector<double> p(n);
      for (std::size_t j = 0; j < n; ++j)
        p[j] = centroid[j] + coef * (vx[n][j] - centroid[j]);
      return p;
    };
    auto xr = blend(-1.0);
    double fr = eval(xr);
    if (fr < vf[0]) {
      auto xe = blend(-2.0);
      double fe = eval(xe);
      if (fe < fr) {
        vx[n] = xe;
        vf[n] = fe;
      } else {
        vx[n] = xr;
        vf[n] = fr;
      }
    } else if (fr < vf[n - 1]) {
      vx[n] = xr;
      vf[n] = fr;
    } else {
      bool outside = fr < vf[n];
      auto xc = blend(outside ? -0.5 : 0.5);
      double fc = eval(xc);
      if (fc < std::min(fr, vf[n])) {
        vx[n] = xc;
        vf[n] = fc;
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t j = 0; j < n; ++j)
            vx[i][j] = vx[0][j] + 0.5 * (vx[i][j] - vx[0][j]);
          vf[i] = eval(vx[i]);
        }
      }
    }
    order();
  }
  return {vx[0], vf[0], diameter() < 1e-8, evals};
}

}  // namespace

FittedModel fit_mle(const SurvivalSample& sample, DistributionFamily family,
                    WarningList* warnings) {
  sample.validate();
  if (sample.event_count() == 0)
    throw InvalidInput("fit_mle: sample has no events");
  if (is_log_time(family)) {
    for (std::size_t i = 0; i < sample.size(); ++i)
      if (sample.events[i] && sample.times[i] <= 0.0)
        throw InvalidInput("fit_mle: event times must be > 0 for " +
                           family_name(family));
  }
  auto objective = [&](const std::vector<double>& x) {
    return -censored_loglik(decode(family, x), sample);
  };
  NmResult r = nelder_mead(objective, initial_point(sample, family));
  FittedModel model = decode(family, r.x);
  model.loglik = -r.f;
  model.aic = 2.0 * parameter_count(family) - 2.0 * model.loglik;
  model.n_fit = sample.size();
  model.converged = r.converged;
  if (!r.converged)
    warn(warnings, "fit_mle(" + family_name(family) +
                       "): simplex search hit the evaluation cap; best "
                       "iterate returned");
  return model;
}

}  // namespace onearm
