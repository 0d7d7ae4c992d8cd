#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "pdspeech/segmentation.hpp"
#include "pdspeech/train.hpp"

namespace pdspeech {

struct FeatureVector {
  double rms_energy = 0.0;
  double zero_crossing_rate = 0.0;  // circular crossings / samples, in [0,1]
  double autocorr_pitch = 0.0;      // period in samples, 0 when unvoiced
  double energy_std = 0.0;          // std of sub-window rms values
};

inline constexpr std::size_t kFeatureCount = 4;
inline constexpr double kVoicingThreshold = 0.3;

// Pitch search band in samples, tuned for 16 kHz audio (500 Hz down to ~31 Hz).
// The first lag within kPitchPeakTolerance of the best correlation wins, which
// keeps period multiples from stealing the peak.
inline constexpr std::size_t kPitchLagMin = 32;
inline constexpr std::size_t kPitchLagMax = 512;
inline constexpr double kPitchPeakTolerance = 0.9;

FeatureVector extract_features(const SpeechChunk& chunk);

std::array<double, kFeatureCount> feature_array(const FeatureVector& f);

struct FeatureStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> stddev{};  // 0 entries leave the feature centered only
};

FeatureStats fit_standardizer(const std::vector<FeatureVector>& train);

std::array<double, kFeatureCount> standardize(const FeatureVector& f, const FeatureStats& s);

// Euclidean distance on features standardized with train-fold statistics;
// distance ties broken by training order; k must be odd.
Label knn_classify(const std::vector<std::pair<FeatureVector, Label>>& train,
                   const FeatureVector& query, std::size_t k);

// Same split semantics as the network path: fit on train chunks, classify the
// test chunks, score at chunk and recording level.
EvalOutcome knn_evaluate(const std::vector<SpeechChunk>& train_chunks,
                         const std::vector<SpeechChunk>& test_chunks, std::size_t k);

}  // namespace pdspeech
