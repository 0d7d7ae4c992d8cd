#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdspeech/errors.hpp"

namespace pdspeech {

enum class Label { HC, PD };
enum class Kind { Vowel, Syllable, Text };

const char* label_name(Label l);
const char* kind_name(Kind k);
Label label_from_string(const std::string& s);
Kind kind_from_string(const std::string& s);

// Mono floating-point waveform plus the corpus metadata attached to it.
// Amplitudes are clipped to [-1, 1] on ingest.
struct AudioRecording {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string subject_id;
  Label label = Label::HC;
  Kind kind = Kind::Text;
  std::string source_path;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

struct ManifestEntry {
  std::string path;
  std::string subject_id;
  Label label = Label::HC;
  Kind kind = Kind::Text;
  std::string timestamp_path;  // empty when absent
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int working_rate = 16000;
};

// Reads a RIFF/WAVE file (PCM16 or IEEE float32, 1 or 2 channels) into a
// mono recording. Stereo is averaged; integer samples are scaled by 1/32768.
// Metadata fields are left at defaults; callers fill them from the manifest.
AudioRecording read_wav(const std::string& path);

// Writes mono PCM16 little-endian. Samples are clipped to [-1, 1] and
// quantized with scale 32768 so a read-back stays within 1/32768.
void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate);

// Linear-interpolation resampling. Equal rates return the input bitwise.
// Output length is round((len-1) * target/source) + 1, endpoint-preserving.
AudioRecording resample(const AudioRecording& rec, int target_rate);

// Linear resample to an exact output length (endpoints map to endpoints).
std::vector<double> resample_to_length(const std::vector<double>& samples, std::size_t out_len);

// Loads the manifest JSON (array of {path, subject, label, kind, timestamps?}).
// Relative paths are resolved against the manifest's directory.
DatasetManifest load_manifest(const std::string& path, int working_rate);

void save_manifest(const std::string& path, const DatasetManifest& manifest);

// read_wav + clip + mixdown, then resample to the manifest working rate and
// attach the entry's metadata.
AudioRecording load_recording(const ManifestEntry& entry, int working_rate);

}  // namespace pdspeech
