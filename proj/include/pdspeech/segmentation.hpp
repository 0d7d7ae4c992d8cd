#pragma once

#include <string>
#include <vector>

#include "pdspeech/audio.hpp"

namespace pdspeech {

struct WordTimestamp {
  std::string word;
  double start_s = 0.0;
  double end_s = 0.0;
};

// A fixed-length sample window tied to a word span. `samples` holds the raw
// slice until fit_chunk pads or resamples it to the configured chunk length.
struct SpeechChunk {
  std::vector<double> samples;
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<std::string> words;
  std::string recording_ref;
  std::string subject_id;
  Label label = Label::HC;
};

struct EnvelopeParams {
  double window_s = 0.025;
  double hop_s = 0.010;
  double rel_threshold = 0.1;   // fraction of peak RMS
  double min_silence_s = 0.15;  // gaps shorter than this are merged
};

struct EnvelopePoint {
  double time_s = 0.0;  // window center
  double rms = 0.0;
};

// Sliding-window RMS at hop intervals. Length is
// floor((len - window) / hop) + 1, minimum 1 (a short signal yields one
// window covering the whole of it).
std::vector<EnvelopePoint> rms_envelope(const AudioRecording& rec, const EnvelopeParams& p);

// Maximal runs where the envelope reaches rel_threshold * peak become
// chunks; gaps shorter than min_silence_s are merged. Word lists stay empty.
std::vector<SpeechChunk> segment_by_silence(const AudioRecording& rec, const EnvelopeParams& p);

// Consecutive groups of words_per_chunk timestamps become one chunk each;
// a final shorter group still forms a chunk.
std::vector<SpeechChunk> segment_by_words(const AudioRecording& rec,
                                          const std::vector<WordTimestamp>& ts,
                                          int words_per_chunk);

// segment_by_words, then each group boundary is snapped to the envelope
// minimum within +-snap_tolerance_s (kept if no strictly smaller value
// exists). Boundaries that would cross after snapping revert in pairs.
std::vector<SpeechChunk> segment_hybrid(const AudioRecording& rec,
                                        const std::vector<WordTimestamp>& ts, int words_per_chunk,
                                        const EnvelopeParams& p, double snap_tolerance_s);

// Pads shorter chunks symmetrically with zeros; linearly resamples longer
// ones down to chunk_len so word endings are kept rather than truncated.
SpeechChunk fit_chunk(const SpeechChunk& chunk, std::size_t chunk_len);

// Timestamp file: JSON array of {"word", "start", "end"}. The loader
// validates ordering and non-overlap.
std::vector<WordTimestamp> load_timestamps(const std::string& path);
void save_timestamps(const std::string& path, const std::vector<WordTimestamp>& ts);

// Chunk dump: JSON lines next to a float32 sample blob.
void write_chunk_dump(const std::string& jsonl_path, const std::string& data_path,
                      const std::vector<SpeechChunk>& chunks);
std::vector<SpeechChunk> read_chunk_dump(const std::string& jsonl_path);

}  // namespace pdspeech
