#pragma once

#include <cstdint>
#include <string>

#include "pdspeech/segmentation.hpp"
#include "pdspeech/synthgen.hpp"
#include "pdspeech/train.hpp"

namespace pdspeech {

enum class Strategy { Silence, Words, Hybrid };

Strategy strategy_from_string(const std::string& s);
const char* strategy_name(Strategy s);

// Every tunable of the pipeline in one flat document. Serialized as a JSON
// object with these exact keys; loading rejects unknown keys so typos cannot
// silently fall back to defaults.
struct RunConfig {
  // ingest + segmentation
  int working_rate = 16000;
  double env_window_s = 0.025;
  double env_hop_s = 0.010;
  double env_rel_threshold = 0.1;
  double env_min_silence_s = 0.15;
  Strategy strategy = Strategy::Hybrid;
  int words_per_chunk = 1;
  double snap_tolerance_s = 0.05;
  std::uint64_t chunk_len = 128;

  // training
  double lr = 3e-4;
  std::uint64_t epochs = 16;
  std::uint64_t batch_size = 16;
  std::uint64_t early_stop_patience = 8;
  double val_frac = 0.15;

  // repeated stratified holdout
  std::uint64_t holdout_iterations = 9;
  double test_frac = 0.2;

  // baseline
  std::uint64_t knn_k = 5;

  // synthetic corpus
  std::uint64_t synth_subjects_per_class = 10;
  std::uint64_t synth_recordings_per_subject = 2;
  std::uint64_t synth_words_per_recording = 40;
  std::uint64_t synth_planted_per_recording = 4;
  double synth_word_dur_s = 0.3;
  double synth_gap_dur_s = 0.2;
  double synth_f0_hc = 220.0;
  double synth_f0_pd = 220.0;
  double synth_tremor_hz = 5.0;
  double synth_tremor_depth = 0.5;
  double synth_timestamp_jitter_s = 0.01;

  std::uint64_t seed = 1;
};

// Parses a JSON object of config keys; absent keys keep defaults, unknown
// keys raise InvalidConfig.
RunConfig load_config(const std::string& path);

// Applies one "key=value" override on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Canonical serialized form (sorted keys, fixed layout); identical configs
// always produce identical text.
std::string config_text(const RunConfig& cfg);

void save_config(const std::string& path, const RunConfig& cfg);

// FNV-1a 64 over the canonical text, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

// Views of the document consumed by individual modules.
EnvelopeParams envelope_params(const RunConfig& cfg);
Hyper hyper_params(const RunConfig& cfg);
SynthConfig synth_params(const RunConfig& cfg);

}  // namespace pdspeech
