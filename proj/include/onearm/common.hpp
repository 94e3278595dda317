#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace onearm {

/// Violated precondition or malformed user input.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A test statistic whose variance term collapses (empty window, zero
/// radicand, log singularity). Callers that evaluate batteries catch this
/// and tally the component as degenerate instead of aborting.
class DegenerateStatistic : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure that is not an input problem (e.g. a covariance matrix
/// that stays indefinite after the jitter ladder).
class ComputationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WarningList = std::vector<std::string>;

/// Appends to the sink when one is provided; warnings are never fatal.
inline void warn(WarningList* sink, std::string message) {
  if (sink) sink->push_back(std::move(message));
}

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile, p in (0,1).
double normal_quantile(double p);

/// Adaptive Simpson quadrature of f over [a,b] to absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double abs_tol);

/// log(1 + e^x) without overflow.
double softplus(double x);

/// RFC-4180 quoting for one CSV field (quotes only when needed).
std::string csv_field(const std::string& value);

}  // namespace onearm
