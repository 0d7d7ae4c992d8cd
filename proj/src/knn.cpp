#include "pdspeech/knn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pdspeech {

namespace {

double window_rms(const std::vector<double>& x, std::size_t begin, std::size_t end) {
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(end - begin));
}

}  // namespace

FeatureVector extract_features(const SpeechChunk& chunk) {
  const auto& x = chunk.samples;
  if (x.empty()) raise(Err::EmptyChunk, "cannot extract features from an empty chunk");
  const std::size_t n = x.size();
  FeatureVector f;

  f.rms_energy = window_rms(x, 0, n);

  // circular crossing count so shifting the chunk does not change the rate
  std::size_t crossings = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x[i];
    const double b = x[(i + 1) % n];
    if (a * b < 0.0) ++crossings;
  }
  f.zero_crossing_rate = static_cast<double>(crossings) / static_cast<double>(n);

  // autocorrelation pitch; per-term normalization so a periodic signal scores
  // exactly 1 at its period, then the first lag near the best correlation wins
  // so period multiples cannot steal the peak
  double norm = 0.0;
  for (double v : x) norm += v * v;
  const std::size_t lag_max = std::min<std::size_t>(n / 2, kPitchLagMax);
  if (norm > 0.0 && lag_max >= kPitchLagMin) {
    const double mean_power = norm / static_cast<double>(n);
    std::vector<double> r(lag_max + 1, 0.0);
    double best_r = -1.0;
    for (std::size_t lag = kPitchLagMin; lag <= lag_max; ++lag) {
      double acc = 0.0;
      for (std::size_t t = 0; t + lag < n; ++t) acc += x[t] * x[t + lag];
      r[lag] = acc / static_cast<double>(n - lag) / mean_power;
      best_r = std::max(best_r, r[lag]);
    }
    if (best_r >= kVoicingThreshold) {
      for (std::size_t lag = kPitchLagMin; lag <= lag_max; ++lag) {
        if (r[lag] >= kPitchPeakTolerance * best_r) {
          while (lag < lag_max && r[lag + 1] > r[lag]) ++lag;  // climb the shoulder
          f.autocorr_pitch = static_cast<double>(lag);
          break;
        }
      }
    }
  }

  // rms spread over eight equal sub-windows
  const std::size_t windows = std::min<std::size_t>(8, n);
  std::vector<double> rms(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t begin = w * n / windows;
    const std::size_t end = (w + 1) * n / windows;
    rms[w] = window_rms(x, begin, end);
  }
  double mean = 0.0;
  for (double v : rms) mean += v;
  mean /= static_cast<double>(windows);
  double var = 0.0;
  for (double v : rms) var += (v - mean) * (v - mean);
  f.energy_std = std::sqrt(var / static_cast<double>(windows));
  return f;
}

std::array<double, kFeatureCount> feature_array(const FeatureVector& f) {
  return {f.rms_energy, f.zero_crossing_rate, f.autocorr_pitch, f.energy_std};
}

FeatureStats fit_standardizer(const std::vector<FeatureVector>& train) {
  if (train.empty()) raise(Err::EmptyTrainingSet, "no feature vectors to standardize");
  FeatureStats s;
  for (const auto& f : train) {
    const auto a = feature_array(f);
    for (std::size_t i = 0; i < kFeatureCount; ++i) s.mean[i] += a[i];
  }
  for (auto& m : s.mean) m /= static_cast<double>(train.size());
  for (const auto& f : train) {
    const auto a = feature_array(f);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      s.stddev[i] += (a[i] - s.mean[i]) * (a[i] - s.mean[i]);
    }
  }
  for (auto& v : s.stddev) v = std::sqrt(v / static_cast<double>(train.size()));
  return s;
}

std::array<double, kFeatureCount> standardize(const FeatureVector& f, const FeatureStats& s) {
  auto a = feature_array(f);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    a[i] -= s.mean[i];
    if (s.stddev[i] > 0.0) a[i] /= s.stddev[i];
  }
  return a;
}

namespace {

double sq_dist(const std::array<double, kFeatureCount>& a,
               const std::array<double, kFeatureCount>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

}  // namespace

Label knn_classify(const std::vector<std::pair<FeatureVector, Label>>& train,
                   const FeatureVector& query, std::size_t k) {
  if (train.empty()) raise(Err::EmptyTrainingSet, "knn needs training points");
  if (k == 0 || k % 2 == 0) raise(Err::EvenK, "k must be odd");
  if (k > train.size()) raise(Err::InvalidConfig, "k exceeds the training-set size");

  std::vector<FeatureVector> feats;
  feats.reserve(train.size());
  for (const auto& [f, l] : train) feats.push_back(f);
  const auto stats = fit_standardizer(feats);
  const auto q = standardize(query, stats);

  std::vector<std::pair<double, std::size_t>> order(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    order[i] = {sq_dist(standardize(train[i].first, stats), q), i};
  }
  std::sort(order.begin(), order.end());  // index breaks distance ties

  std::size_t pd = 0, hc = 0;
  for (std::size_t i = 0; i < k; ++i) {
    (train[order[i].second].second == Label::PD ? pd : hc) += 1;
  }
  return pd > hc ? Label::PD : Label::HC;
}

EvalOutcome knn_evaluate(const std::vector<SpeechChunk>& train_chunks,
                         const std::vector<SpeechChunk>& test_chunks, std::size_t k) {
  if (train_chunks.empty()) raise(Err::EmptyTrainingSet, "no training chunks");
  if (test_chunks.empty()) raise(Err::EmptyTestSet, "no test chunks");
  std::vector<std::pair<FeatureVector, Label>> train;
  for (const auto& c : train_chunks) train.emplace_back(extract_features(c), c.label);

  EvalOutcome out;
  out.chunk_pred.resize(test_chunks.size());
  std::vector<Label> truth;
  for (std::size_t i = 0; i < test_chunks.size(); ++i) {
    out.chunk_pred[i] = knn_classify(train, extract_features(test_chunks[i]), k);
    truth.push_back(test_chunks[i].label);
  }
  out.chunk_level = compute_metrics(out.chunk_pred, truth);

  std::map<std::string, RecordingVote> votes;
  for (std::size_t i = 0; i < test_chunks.size(); ++i) {
    auto& v = votes[test_chunks[i].recording_ref];
    v.recording_ref = test_chunks[i].recording_ref;
    v.actual = test_chunks[i].label;
    if (out.chunk_pred[i] == Label::PD) ++v.pd_votes;
    else ++v.hc_votes;
  }
  std::vector<Label> rec_pred, rec_truth;
  for (auto& [ref, v] : votes) {
    v.predicted = majority_label(v.pd_votes, v.hc_votes);
    rec_pred.push_back(v.predicted);
    rec_truth.push_back(v.actual);
    out.votes.push_back(v);
  }
  out.recording_level = compute_metrics(rec_pred, rec_truth);
  return out;
}

}  // namespace pdspeech
