#pragma once

#include <string>
#include <vector>

#include "pdspeech/config.hpp"
#include "pdspeech/gradcam.hpp"
#include "pdspeech/knn.hpp"
#include "pdspeech/train.hpp"

namespace pdspeech {

// Loads every manifest recording and cuts it into chunks with the configured
// strategy. With fit=true each chunk is padded or compressed to
// cfg.chunk_len; cmd_segment dumps the natural spans instead.
std::vector<SpeechChunk> collect_chunks(const DatasetManifest& manifest, const RunConfig& cfg,
                                        bool fit);

struct IterationReport {
  SplitPlan plan;
  Metrics cnn_chunk, cnn_recording;
  Metrics knn_chunk, knn_recording;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::string model_file;  // relative to the run directory
};

struct ExperimentReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<IterationReport> iterations;
  EvalReport cnn_chunk_agg, cnn_recording_agg;
  EvalReport knn_chunk_agg, knn_recording_agg;
  PairedTestResult cnn_vs_knn_chunk, cnn_vs_knn_recording;
  // Test-set attributions pooled over iterations; normalization and
  // top-decile selection run within each iteration's model.
  std::vector<Attribution> attributions;
  std::vector<WordCount> top_words;
};

// Full experiment: repeated stratified subject-disjoint holdout with the CNN,
// the KNN baseline on identical splits, activation attributions for every
// test chunk, and all report artifacts written under out_dir.
ExperimentReport run_experiment(const DatasetManifest& manifest, const RunConfig& cfg,
                                const std::string& out_dir);

// "version=... config_hash=... seed=..." line embedded in text artifacts.
std::string artifact_meta(const RunConfig& cfg);

// Merges reports of runs that share a config hash into out_dir; mismatched
// hashes or tool versions are refused.
void merge_reports(const std::vector<std::string>& run_dirs, const std::string& out_dir);

}  // namespace pdspeech
