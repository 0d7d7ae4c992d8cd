#include "pdspeech/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace pdspeech {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FrameGrid {
  std::size_t window = 0;
  std::size_t hop = 0;
};

FrameGrid make_grid(const AudioRecording& rec, const EnvelopeParams& p) {
  if (p.window_s <= 0 || p.hop_s <= 0) raise(Err::InvalidConfig, "envelope window/hop must be positive");
  if (p.rel_threshold <= 0 || p.rel_threshold >= 1) {
    raise(Err::InvalidConfig, "rel_threshold must be in (0,1)");
  }
  FrameGrid g;
  g.window = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(p.window_s * rec.sample_rate)));
  g.hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(p.hop_s * rec.sample_rate)));
  return g;
}

std::vector<double> slice_samples(const AudioRecording& rec, double start_s, double end_s) {
  const auto n = rec.samples.size();
  std::size_t a = static_cast<std::size_t>(std::clamp<long long>(
      std::llround(start_s * rec.sample_rate), 0, static_cast<long long>(n)));
  std::size_t b = static_cast<std::size_t>(std::clamp<long long>(
      std::llround(end_s * rec.sample_rate), static_cast<long long>(a), static_cast<long long>(n)));
  return {rec.samples.begin() + static_cast<std::ptrdiff_t>(a),
          rec.samples.begin() + static_cast<std::ptrdiff_t>(b)};
}

SpeechChunk chunk_from_span(const AudioRecording& rec, double start_s, double end_s,
                            std::vector<std::string> words) {
  SpeechChunk c;
  c.start_s = start_s;
  c.end_s = end_s;
  c.words = std::move(words);
  c.recording_ref = rec.source_path;
  c.subject_id = rec.subject_id;
  c.label = rec.label;
  c.samples = slice_samples(rec, start_s, end_s);
  return c;
}

void validate_timestamps(const std::vector<WordTimestamp>& ts, double duration_s) {
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i].start_s < 0 || ts[i].start_s >= ts[i].end_s) {
      raise(Err::InvalidTimestamps, "word '" + ts[i].word + "' has invalid span");
    }
    if (i > 0 && ts[i].start_s < ts[i - 1].end_s) {
      raise(Err::InvalidTimestamps, "timestamps overlap at word '" + ts[i].word + "'");
    }
    if (ts[i].end_s > duration_s + 1e-9) {
      raise(Err::TimestampOutOfRange, "word '" + ts[i].word + "' ends at " +
                                          std::to_string(ts[i].end_s) + "s, recording is " +
                                          std::to_string(duration_s) + "s");
    }
  }
}

}  // namespace

std::vector<EnvelopePoint> rms_envelope(const AudioRecording& rec, const EnvelopeParams& p) {
  if (rec.samples.empty()) raise(Err::EmptyAudio, rec.source_path);
  const FrameGrid g = make_grid(rec, p);
  const std::size_t n = rec.samples.size();

  std::vector<EnvelopePoint> env;
  if (n < g.window) {
    double acc = 0.0;
    for (double x : rec.samples) acc += x * x;
    env.push_back({0.5 * rec.duration_s(), std::sqrt(acc / static_cast<double>(n))});
    return env;
  }

  const std::size_t frames = (n - g.window) / g.hop + 1;
  env.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * g.hop;
    double acc = 0.0;
    for (std::size_t i = start; i < start + g.window; ++i) acc += rec.samples[i] * rec.samples[i];
    const double center = (static_cast<double>(start) + 0.5 * static_cast<double>(g.window)) /
                          rec.sample_rate;
    env.push_back({center, std::sqrt(acc / static_cast<double>(g.window))});
  }
  return env;
}

std::vector<SpeechChunk> segment_by_silence(const AudioRecording& rec, const EnvelopeParams& p) {
  const auto env = rms_envelope(rec, p);
  const FrameGrid g = make_grid(rec, p);
  const double frame_half = 0.5 * static_cast<double>(g.window) / rec.sample_rate;
  const double duration = rec.duration_s();

  double peak = 0.0;
  for (const auto& e : env) peak = std::max(peak, e.rms);
  if (peak <= 0.0) raise(Err::NoSpeechDetected, rec.source_path + ": silent recording");
  const double threshold = p.rel_threshold * peak;

  struct Run {
    std::size_t first, last;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < env.size(); ++i) {
    if (env[i].rms >= threshold) {
      if (!runs.empty() && runs.back().last + 1 == i) {
        runs.back().last = i;
      } else {
        runs.push_back({i, i});
      }
    }
  }
  if (runs.empty()) raise(Err::NoSpeechDetected, rec.source_path);

  std::vector<Run> merged{runs.front()};
  for (std::size_t r = 1; r < runs.size(); ++r) {
    const double gap = (env[runs[r].first].time_s - frame_half) -
                       (env[merged.back().last].time_s + frame_half);
    if (gap < p.min_silence_s) {
      merged.back().last = runs[r].last;
    } else {
      merged.push_back(runs[r]);
    }
  }

  std::vector<SpeechChunk> chunks;
  chunks.reserve(merged.size());
  for (const auto& run : merged) {
    double start = run.first == 0 ? 0.0 : env[run.first].time_s - frame_half;
    double end = run.last + 1 == env.size() ? duration : env[run.last].time_s + frame_half;
    start = std::clamp(start, 0.0, duration);
    end = std::clamp(end, start, duration);
    chunks.push_back(chunk_from_span(rec, start, end, {}));
  }
  return chunks;
}

std::vector<SpeechChunk> segment_by_words(const AudioRecording& rec,
                                          const std::vector<WordTimestamp>& ts,
                                          int words_per_chunk) {
  if (rec.samples.empty()) raise(Err::EmptyAudio, rec.source_path);
  if (ts.empty()) raise(Err::EmptyTimestamps, rec.source_path);
  if (words_per_chunk < 1) raise(Err::InvalidConfig, "words_per_chunk must be >= 1");
  validate_timestamps(ts, rec.duration_s());

  std::vector<SpeechChunk> chunks;
  for (std::size_t i = 0; i < ts.size(); i += static_cast<std::size_t>(words_per_chunk)) {
    const std::size_t j = std::min(ts.size(), i + static_cast<std::size_t>(words_per_chunk));
    std::vector<std::string> words;
    words.reserve(j - i);
    for (std::size_t k = i; k < j; ++k) words.push_back(ts[k].word);
    chunks.push_back(chunk_from_span(rec, ts[i].start_s, ts[j - 1].end_s, std::move(words)));
  }
  return chunks;
}

std::vector<SpeechChunk> segment_hybrid(const AudioRecording& rec,
                                        const std::vector<WordTimestamp>& ts, int words_per_chunk,
                                        const EnvelopeParams& p, double snap_tolerance_s) {
  auto base = segment_by_words(rec, ts, words_per_chunk);
  if (snap_tolerance_s <= 0.0) return base;

  const auto env = rms_envelope(rec, p);

  auto env_value_at = [&](double t) {
    // nearest frame center
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < env.size(); ++i) {
      const double d = std::abs(env[i].time_s - t);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return env[best].rms;
  };

  auto snap = [&](double b) {
    const double v0 = env_value_at(b);
    double best_t = b;
    double best_v = v0;
    for (const auto& e : env) {
      if (e.time_s < b - snap_tolerance_s || e.time_s > b + snap_tolerance_s) continue;
      if (e.rms < best_v) {  // strictly smaller; first occurrence wins on ties
        best_v = e.rms;
        best_t = e.time_s;
      }
    }
    return best_t;
  };

  const std::size_t n = base.size();
  std::vector<double> orig(2 * n), snapped(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    orig[2 * i] = base[i].start_s;
    orig[2 * i + 1] = base[i].end_s;
    snapped[2 * i] = snap(base[i].start_s);
    snapped[2 * i + 1] = snap(base[i].end_s);
  }

  // Resolve crossings: any adjacent pair out of order reverts to the
  // unsnapped positions; repeat until stable (reverts can expose new pairs).
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 1 < 2 * n; ++i) {
      const bool within_chunk = (i % 2 == 0);
      const bool bad = within_chunk ? snapped[i] >= snapped[i + 1] : snapped[i] > snapped[i + 1];
      if (bad && (snapped[i] != orig[i] || snapped[i + 1] != orig[i + 1])) {
        snapped[i] = orig[i];
        snapped[i + 1] = orig[i + 1];
        changed = true;
      }
    }
  }

  std::vector<SpeechChunk> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(chunk_from_span(rec, snapped[2 * i], snapped[2 * i + 1],
                                  std::move(base[i].words)));
  }
  return out;
}

SpeechChunk fit_chunk(const SpeechChunk& chunk, std::size_t chunk_len) {
  if (chunk.samples.empty()) raise(Err::EmptyChunk, chunk.recording_ref);
  if (chunk_len == 0) raise(Err::InvalidConfig, "chunk_len must be positive");
  SpeechChunk out = chunk;
  const std::size_t n = chunk.samples.size();
  if (n == chunk_len) return out;
  if (n < chunk_len) {
    const std::size_t left = (chunk_len - n) / 2;
    std::vector<double> padded(chunk_len, 0.0);
    std::copy(chunk.samples.begin(), chunk.samples.end(), padded.begin() + static_cast<std::ptrdiff_t>(left));
    out.samples = std::move(padded);
  } else {
    out.samples = resample_to_length(chunk.samples, chunk_len);
  }
  return out;
}

std::vector<WordTimestamp> load_timestamps(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Err::MissingFile, path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(Err::InvalidTimestamps, path + ": " + e.what());
  }
  if (!doc.is_array()) raise(Err::InvalidTimestamps, path + ": expected a JSON array");
  std::vector<WordTimestamp> ts;
  ts.reserve(doc.size());
  for (const auto& e : doc) {
    WordTimestamp w;
    try {
      w.word = e.at("word").get<std::string>();
      w.start_s = e.at("start").get<double>();
      w.end_s = e.at("end").get<double>();
    } catch (const json::exception& ex) {
      raise(Err::InvalidTimestamps, path + ": " + ex.what());
    }
    ts.push_back(std::move(w));
  }
  validate_timestamps(ts, std::numeric_limits<double>::infinity());
  return ts;
}

void save_timestamps(const std::string& path, const std::vector<WordTimestamp>& ts) {
  json doc = json::array();
  for (const auto& w : ts) {
    doc.push_back({{"word", w.word}, {"start", w.start_s}, {"end", w.end_s}});
  }
  std::ofstream out(path);
  if (!out) raise(Err::MissingFile, path + ": cannot open for writing");
  out << doc.dump(2) << "\n";
}

void write_chunk_dump(const std::string& jsonl_path, const std::string& data_path,
                      const std::vector<SpeechChunk>& chunks) {
  std::ofstream data(data_path, std::ios::binary);
  if (!data) raise(Err::MissingFile, data_path + ": cannot open for writing");
  std::ofstream meta(jsonl_path);
  if (!meta) raise(Err::MissingFile, jsonl_path + ": cannot open for writing");

  const std::string data_name = fs::path(data_path).filename().string();
  std::size_t offset = 0;
  for (const auto& c : chunks) {
    std::vector<float> f32(c.samples.begin(), c.samples.end());
    data.write(reinterpret_cast<const char*>(f32.data()),
               static_cast<std::streamsize>(f32.size() * sizeof(float)));
    json line{{"recording", c.recording_ref}, {"subject", c.subject_id},
              {"label", label_name(c.label)},  {"start", c.start_s},
              {"end", c.end_s},                {"words", c.words},
              {"data_file", data_name},        {"offset", offset},
              {"count", f32.size()}};
    meta << line.dump() << "\n";
    offset += f32.size();
  }
}

std::vector<SpeechChunk> read_chunk_dump(const std::string& jsonl_path) {
  std::ifstream meta(jsonl_path);
  if (!meta) raise(Err::MissingFile, jsonl_path);
  const fs::path base = fs::path(jsonl_path).parent_path();

  std::vector<SpeechChunk> chunks;
  std::string cur_file;
  std::vector<float> blob;
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::exception& ex) {
      raise(Err::MalformedInput, jsonl_path + ": " + ex.what());
    }
    SpeechChunk c;
    std::size_t offset = 0, count = 0;
    try {
      c.recording_ref = e.at("recording").get<std::string>();
      c.subject_id = e.at("subject").get<std::string>();
      c.label = label_from_string(e.at("label").get<std::string>());
      c.start_s = e.at("start").get<double>();
      c.end_s = e.at("end").get<double>();
      c.words = e.at("words").get<std::vector<std::string>>();
      const std::string file = e.at("data_file").get<std::string>();
      offset = e.at("offset").get<std::size_t>();
      count = e.at("count").get<std::size_t>();
      if (file != cur_file) {
        cur_file = file;
        std::ifstream data(base / file, std::ios::binary);
        if (!data) raise(Err::MissingFile, (base / file).string());
        std::vector<char> bytes((std::istreambuf_iterator<char>(data)),
                                std::istreambuf_iterator<char>());
        blob.resize(bytes.size() / sizeof(float));
        std::memcpy(blob.data(), bytes.data(), blob.size() * sizeof(float));
      }
    } catch (const json::exception& ex) {
      raise(Err::MalformedInput, jsonl_path + ": " + ex.what());
    }
    if (offset + count > blob.size()) {
      raise(Err::MalformedInput, jsonl_path + ": chunk data out of range");
    }
    c.samples.assign(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                     blob.begin() + static_cast<std::ptrdiff_t>(offset + count));
    chunks.push_back(std::move(c));
  }
  return chunks;
}

}  // namespace pdspeech
