#include "pdspeech/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace pdspeech {

namespace fs = std::filesystem;
using nlohmann::json;

const char* label_name(Label l) { return l == Label::HC ? "HC" : "PD"; }

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Vowel: return "vowel";
    case Kind::Syllable: return "syllable";
    case Kind::Text: return "text";
  }
  return "text";
}

Label label_from_string(const std::string& s) {
  if (s == "HC") return Label::HC;
  if (s == "PD") return Label::PD;
  raise(Err::MalformedInput, "unknown label '" + s + "' (expected HC or PD)");
}

Kind kind_from_string(const std::string& s) {
  if (s == "vowel") return Kind::Vowel;
  if (s == "syllable") return Kind::Syllable;
  if (s == "text") return Kind::Text;
  raise(Err::MalformedInput, "unknown kind '" + s + "'");
}

namespace {

uint32_t read_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16le(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}

void put_u16le(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

double clip1(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace

AudioRecording read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Err::MissingFile, path);

  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    raise(Err::MalformedRiff, path + ": missing RIFF/WAVE magic");
  }

  uint16_t audio_format = 0, num_channels = 0, bits_per_sample = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::size_t data_off = 0, data_len = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    uint32_t chunk_size = read_u32le(hdr + 4);
    std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      raise(Err::MalformedRiff, path + ": chunk length exceeds file size");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) raise(Err::MalformedRiff, path + ": fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      audio_format = read_u16le(f);
      num_channels = read_u16le(f + 2);
      sample_rate = read_u32le(f + 4);
      bits_per_sample = read_u16le(f + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_size;
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (!have_fmt || !have_data) raise(Err::MalformedRiff, path + ": missing fmt or data chunk");
  if (num_channels < 1 || num_channels > 2) {
    raise(Err::UnsupportedEncoding, path + ": " + std::to_string(num_channels) + " channels");
  }
  const bool pcm16 = audio_format == 1 && bits_per_sample == 16;
  const bool float32 = audio_format == 3 && bits_per_sample == 32;
  if (!pcm16 && !float32) {
    raise(Err::UnsupportedEncoding, path + ": format " + std::to_string(audio_format) + "/" +
                                        std::to_string(bits_per_sample) + " bits");
  }
  if (sample_rate == 0) raise(Err::MalformedRiff, path + ": zero sample rate");

  const std::size_t bytes_per_sample = bits_per_sample / 8;
  const std::size_t frame_size = bytes_per_sample * num_channels;
  const std::size_t n_frames = data_len / frame_size;
  if (n_frames == 0) raise(Err::EmptyAudio, path + ": zero frames");

  AudioRecording rec;
  rec.sample_rate = static_cast<int>(sample_rate);
  rec.source_path = path;
  rec.samples.resize(n_frames);
  const unsigned char* d = bytes.data() + data_off;
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (uint16_t ch = 0; ch < num_channels; ++ch) {
      const unsigned char* s = d + i * frame_size + ch * bytes_per_sample;
      if (pcm16) {
        int16_t v;
        std::memcpy(&v, s, 2);
        acc += v / 32768.0;
      } else {
        float v;
        std::memcpy(&v, s, 4);
        acc += v;
      }
    }
    rec.samples[i] = clip1(acc / num_channels);
  }
  return rec;
}

void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  if (samples.empty()) raise(Err::EmptyAudio, path + ": nothing to write");
  if (sample_rate <= 0) raise(Err::MalformedInput, path + ": sample rate must be positive");

  const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32le(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<uint32_t>(sample_rate));
  put_u32le(out, static_cast<uint32_t>(sample_rate) * 2);
  put_u16le(out, 2);
  put_u16le(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32le(out, data_len);
  for (double x : samples) {
    double q = std::round(clip1(x) * 32768.0);
    int16_t v = static_cast<int16_t>(std::clamp(q, -32768.0, 32767.0));
    put_u16le(out, static_cast<uint16_t>(v));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) raise(Err::MissingFile, path + ": cannot open for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) raise(Err::MissingFile, path + ": short write");
}

std::vector<double> resample_to_length(const std::vector<double>& samples, std::size_t out_len) {
  if (samples.empty()) raise(Err::EmptyAudio, "resample of empty signal");
  if (out_len == 0) return {};
  if (out_len == samples.size()) return samples;
  std::vector<double> out(out_len);
  if (samples.size() == 1 || out_len == 1) {
    std::fill(out.begin(), out.end(), samples.front());
    if (out_len > 1) out.back() = samples.back();
    return out;
  }
  const double step = static_cast<double>(samples.size() - 1) / static_cast<double>(out_len - 1);
  for (std::size_t i = 0; i < out_len; ++i) {
    double pos = i * step;
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo >= samples.size() - 1) {
      out[i] = samples.back();
      continue;
    }
    double frac = pos - static_cast<double>(lo);
    out[i] = samples[lo] * (1.0 - frac) + samples[lo + 1] * frac;
  }
  return out;
}

AudioRecording resample(const AudioRecording& rec, int target_rate) {
  if (rec.samples.empty()) raise(Err::EmptyAudio, rec.source_path);
  if (target_rate <= 0) raise(Err::MalformedInput, "target rate must be positive");
  if (target_rate == rec.sample_rate) return rec;

  const double ratio = static_cast<double>(target_rate) / rec.sample_rate;
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround((rec.samples.size() - 1) * ratio)) + 1;
  AudioRecording out = rec;
  out.sample_rate = target_rate;
  out.samples = resample_to_length(rec.samples, out_len);
  return out;
}

DatasetManifest load_manifest(const std::string& path, int working_rate) {
  std::ifstream in(path);
  if (!in) raise(Err::MissingFile, path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(Err::MalformedInput, path + ": " + e.what());
  }
  if (!doc.is_array()) raise(Err::MalformedInput, path + ": manifest must be a JSON array");

  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  DatasetManifest m;
  m.working_rate = working_rate;
  std::vector<std::string> seen;
  for (const auto& e : doc) {
    if (!e.is_object()) raise(Err::MalformedInput, path + ": entry is not an object");
    ManifestEntry entry;
    try {
      entry.path = resolve(e.at("path").get<std::string>());
      entry.subject_id = e.at("subject").get<std::string>();
      entry.label = label_from_string(e.at("label").get<std::string>());
      entry.kind = kind_from_string(e.at("kind").get<std::string>());
      if (e.contains("timestamps")) {
        entry.timestamp_path = resolve(e.at("timestamps").get<std::string>());
      }
    } catch (const json::exception& ex) {
      raise(Err::MalformedInput, path + ": " + ex.what());
    }
    if (entry.subject_id.empty()) raise(Err::MalformedInput, path + ": empty subject id");
    if (std::find(seen.begin(), seen.end(), entry.path) != seen.end()) {
      raise(Err::MalformedInput, path + ": duplicate source path " + entry.path);
    }
    seen.push_back(entry.path);
    m.entries.push_back(std::move(entry));
  }
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  const fs::path base = fs::path(path).parent_path();
  auto relativize = [&](const std::string& p) {
    std::error_code ec;
    fs::path rel = fs::relative(p, base, ec);
    return ec ? p : rel.string();
  };
  json doc = json::array();
  for (const auto& e : manifest.entries) {
    json o;
    o["path"] = relativize(e.path);
    o["subject"] = e.subject_id;
    o["label"] = label_name(e.label);
    o["kind"] = kind_name(e.kind);
    if (!e.timestamp_path.empty()) o["timestamps"] = relativize(e.timestamp_path);
    doc.push_back(std::move(o));
  }
  std::ofstream out(path);
  if (!out) raise(Err::MissingFile, path + ": cannot open for writing");
  out << doc.dump(2) << "\n";
}

AudioRecording load_recording(const ManifestEntry& entry, int working_rate) {
  AudioRecording rec = read_wav(entry.path);
  rec.subject_id = entry.subject_id;
  rec.label = entry.label;
  rec.kind = entry.kind;
  if (rec.sample_rate != working_rate) rec = resample(rec, working_rate);
  return rec;
}

}  // namespace pdspeech
