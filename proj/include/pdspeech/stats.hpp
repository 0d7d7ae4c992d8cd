#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pdspeech/audio.hpp"

namespace pdspeech {

// Confusion-matrix metrics with PD as the positive class.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  // precision or recall had an empty denominator and was reported as 0
  bool degenerate = false;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample std, denominator n-1
  bool degenerate = false;  // fewer than two values
};

struct EvalReport {
  std::vector<Metrics> per_iteration;
  MetricSummary accuracy, precision, recall, f1;
};

struct PairedTestResult {
  double t_stat = 0.0;
  double p_value = 1.0;
  std::size_t dof = 0;
  bool zero_variance = false;  // nonzero constant differences
};

Metrics compute_metrics(const std::vector<Label>& predicted, const std::vector<Label>& actual);

EvalReport aggregate(const std::vector<Metrics>& per_iteration);

MetricSummary summarize(const std::vector<double>& values);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// CDF of Student's t with nu degrees of freedom.
double student_t_cdf(double t, double nu);

// Two-sided paired t-test over per-index differences a[i] - b[i].
PairedTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Fraction formatted as a percentage with two decimals, e.g. 0.99138 -> "99.14".
std::string format_pct(double fraction);

}  // namespace pdspeech
