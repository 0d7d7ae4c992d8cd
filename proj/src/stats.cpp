#include "pdspeech/stats.hpp"

#include <cmath>
#include <cstdio>

#include "pdspeech/errors.hpp"

namespace pdspeech {

Metrics compute_metrics(const std::vector<Label>& predicted, const std::vector<Label>& actual) {
  if (predicted.size() != actual.size()) {
    raise(Err::LengthMismatch, "prediction and truth lengths differ");
  }
  if (predicted.empty()) raise(Err::EmptyInput, "no predictions to score");
  Metrics m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool pred_pd = predicted[i] == Label::PD;
    const bool is_pd = actual[i] == Label::PD;
    if (pred_pd && is_pd) ++m.tp;
    else if (pred_pd && !is_pd) ++m.fp;
    else if (!pred_pd && is_pd) ++m.fn;
    else ++m.tn;
  }
  const double total = static_cast<double>(predicted.size());
  m.accuracy = static_cast<double>(m.tp + m.tn) / total;
  if (m.tp + m.fp > 0) {
    m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  } else {
    m.degenerate = true;
  }
  if (m.tp + m.fn > 0) {
    m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  } else {
    m.degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

MetricSummary summarize(const std::vector<double>& values) {
  if (values.empty()) raise(Err::EmptyInput, "no values to summarize");
  MetricSummary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() < 2) {
    s.degenerate = true;
    return s;
  }
  double acc = 0.0;
  for (double v : values) acc += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(acc / static_cast<double>(values.size() - 1));
  return s;
}

EvalReport aggregate(const std::vector<Metrics>& per_iteration) {
  if (per_iteration.empty()) raise(Err::EmptyInput, "no iterations to aggregate");
  EvalReport r;
  r.per_iteration = per_iteration;
  std::vector<double> acc, prec, rec, f1;
  for (const auto& m : per_iteration) {
    acc.push_back(m.accuracy);
    prec.push_back(m.precision);
    rec.push_back(m.recall);
    f1.push_back(m.f1);
  }
  r.accuracy = summarize(acc);
  r.precision = summarize(prec);
  r.recall = summarize(rec);
  r.f1 = summarize(f1);
  return r;
}

namespace {

// continued fraction for the incomplete beta (modified Lentz)
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * beta_cf(a, b, x) / a;
  }
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double nu) {
  const double x = nu / (nu + t * t);
  const double half_tail = 0.5 * incomplete_beta(0.5 * nu, 0.5, x);
  return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

PairedTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) raise(Err::LengthMismatch, "paired vectors differ in length");
  if (a.size() < 2) raise(Err::EmptyInput, "paired test needs at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  bool all_zero = true;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    if (d[i] != 0.0) all_zero = false;
  }
  PairedTestResult r;
  r.dof = n - 1;
  if (all_zero) {
    r.p_value = 1.0;
    return r;
  }
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n - 1);
  if (var == 0.0) {
    // nonzero constant differences: the statistic diverges
    r.zero_variance = true;
    r.t_stat = mean > 0.0 ? HUGE_VAL : -HUGE_VAL;
    r.p_value = 0.0;
    return r;
  }
  r.t_stat = mean / std::sqrt(var / static_cast<double>(n));
  const double nu = static_cast<double>(r.dof);
  r.p_value = incomplete_beta(0.5 * nu, 0.5, nu / (nu + r.t_stat * r.t_stat));
  return r;
}

std::string format_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return std::string(buf);
}

}  // namespace pdspeech
