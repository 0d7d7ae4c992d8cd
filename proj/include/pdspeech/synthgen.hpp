#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pdspeech/audio.hpp"
#include "pdspeech/segmentation.hpp"

namespace pdspeech {

// Corpus of harmonic word bursts separated by near-silent gaps. Each class
// draws from its own random stream but the distributions share every knob,
// so when the class-specific knobs are neutral (equal pitch, zero tremor,
// no planted words) the two generative processes coincide and a classifier
// can only reach chance accuracy.
// Every word of a class-positive recording carries tremor-rate amplitude
// modulation; the planted subset additionally carries a noise burst, the
// stronger cue that attribution is expected to localize.
struct SynthConfig {
  std::size_t subjects_per_class = 10;
  std::size_t recordings_per_subject = 2;
  std::size_t words_per_recording = 8;
  std::size_t planted_per_recording = 2;
  double word_dur_s = 0.3;
  double gap_dur_s = 0.2;
  double f0_hc = 220.0;
  double f0_pd = 220.0;
  double tremor_hz = 5.0;
  double tremor_depth = 0.5;
  double timestamp_jitter_s = 0.01;
  int sample_rate = 16000;
  std::uint64_t seed = 1;
};

struct SynthWord {
  std::string token;
  double start_s = 0.0;  // exact synthesis span
  double end_s = 0.0;
  bool planted = false;
};

struct SynthRecording {
  std::string id;  // doubles as the wav basename stem
  std::string subject_id;
  Label label = Label::HC;
  int sample_rate = 16000;
  std::vector<double> samples;
  std::vector<SynthWord> words;         // ground truth, index-aligned with chunks
  std::vector<WordTimestamp> jittered;  // what the timestamp file carries
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<SynthRecording> recordings;
};

SynthCorpus generate_corpus(const SynthConfig& config);

// View a generated recording the way the ingest path would deliver it.
AudioRecording as_recording(const SynthRecording& rec);

// Writes <id>.wav and <id>.json per recording plus manifest.json and
// truth.json under dir; returns the manifest path.
std::string write_corpus(const SynthCorpus& corpus, const std::string& dir);

// truth.json read-back: wav basename -> ground-truth words in order.
std::map<std::string, std::vector<SynthWord>> load_truth(const std::string& path);

}  // namespace pdspeech
