#include "pdspeech/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "pdspeech/rng.hpp"

namespace pdspeech {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;
constexpr double kWordAmp = 0.3;
constexpr double kNoiseAmp = 0.003;
constexpr double kBurstNoiseAmp = 1.0;

const std::vector<std::string> kPlainTokens = {"pata", "kala", "mano", "sede",
                                               "lira", "bodo", "nemu"};
const std::vector<std::string> kPlantedTokens = {"taku", "rapa", "simo"};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  a ^= b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2);
  return a;
}

void validate(const SynthConfig& c) {
  auto bad = [](const std::string& what) { raise(Err::InvalidConfig, what); };
  if (c.subjects_per_class == 0) bad("subjects_per_class must be positive");
  if (c.recordings_per_subject == 0) bad("recordings_per_subject must be positive");
  if (c.words_per_recording == 0) bad("words_per_recording must be positive");
  if (c.planted_per_recording > c.words_per_recording)
    bad("planted_per_recording exceeds words_per_recording");
  if (c.sample_rate <= 0) bad("sample_rate must be positive");
  if (c.word_dur_s <= 0.0 || std::llround(c.word_dur_s * c.sample_rate) < 2)
    bad("word_dur_s must cover at least two samples");
  if (c.gap_dur_s <= 0.0 || std::llround(c.gap_dur_s * c.sample_rate) < 1)
    bad("gap_dur_s must cover at least one sample");
  if (c.f0_hc <= 0.0 || c.f0_pd <= 0.0) bad("fundamental frequencies must be positive");
  const double nyquist = static_cast<double>(c.sample_rate) / 2.0;
  if (c.f0_hc >= nyquist || c.f0_pd >= nyquist) bad("fundamental must sit below Nyquist");
  if (c.tremor_hz < 0.0) bad("tremor_hz must be non-negative");
  if (c.tremor_depth < 0.0 || c.tremor_depth > 1.0) bad("tremor_depth must lie in [0,1]");
  if (c.timestamp_jitter_s < 0.0) bad("timestamp_jitter_s must be non-negative");
}

SynthRecording make_recording(const SynthConfig& c, Label label, std::size_t subject_index,
                              std::size_t rec_index, double subject_f0_scale) {
  const auto rate = static_cast<double>(c.sample_rate);
  const auto n_word = static_cast<std::size_t>(std::llround(c.word_dur_s * rate));
  const auto n_gap = static_cast<std::size_t>(std::llround(c.gap_dur_s * rate));

  SynthRecording rec;
  rec.sample_rate = c.sample_rate;
  rec.label = label;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%02zu", label == Label::PD ? "pd" : "hc", subject_index);
    rec.subject_id = buf;
    rec.id = rec.subject_id + "_r" + std::to_string(rec_index);
  }

  // per-class streams: neutral knobs make the class distributions coincide
  // while every recording keeps an independent realization
  const auto class_tag = static_cast<std::uint64_t>(label == Label::PD ? 2 : 1);
  Rng audio(mix(mix(mix(mix(c.seed, class_tag), subject_index), rec_index), 0x0A));
  const double f0 = (label == Label::PD ? c.f0_pd : c.f0_hc) * subject_f0_scale;

  rec.samples.assign(n_gap + c.words_per_recording * (n_word + n_gap), 0.0);
  for (auto& s : rec.samples) s = kNoiseAmp * audio.normal();

  std::vector<bool> planted(c.words_per_recording, false);
  if (label == Label::PD && c.planted_per_recording > 0) {
    Rng pick(mix(mix(mix(c.seed, subject_index), rec_index), 0x0B));
    std::vector<std::size_t> order(c.words_per_recording);
    std::iota(order.begin(), order.end(), 0);
    pick.shuffle(order);
    for (std::size_t i = 0; i < c.planted_per_recording; ++i) planted[order[i]] = true;
  }
  Rng plant(mix(mix(mix(c.seed, subject_index), rec_index), 0x0C));

  // jitter below half a gap and half a word keeps the jittered spans sorted,
  // non-overlapping, and inside the recording
  const double jitter =
      std::min({c.timestamp_jitter_s, 0.49 * c.gap_dur_s, 0.49 * c.word_dur_s});

  for (std::size_t w = 0; w < c.words_per_recording; ++w) {
    const std::size_t start = n_gap + w * (n_word + n_gap);
    SynthWord word;
    word.token = kPlainTokens[audio.index(kPlainTokens.size())];
    word.start_s = static_cast<double>(start) / rate;
    word.end_s = static_cast<double>(start + n_word) / rate;
    word.planted = planted[w];

    const double amp = kWordAmp * (1.0 + 0.05 * audio.uniform(-1.0, 1.0));
    const double ph1 = 2.0 * kPi * audio.uniform();
    const double ph2 = 2.0 * kPi * audio.uniform();
    const double ph3 = 2.0 * kPi * audio.uniform();
    // drawn unconditionally so both classes walk the same draw sequence
    const double tremor_phase = 2.0 * kPi * audio.uniform();
    const double j1 = audio.uniform(-1.0, 1.0);
    const double j2 = audio.uniform(-1.0, 1.0);

    if (word.planted) word.token = kPlantedTokens[plant.index(kPlantedTokens.size())];

    for (std::size_t t = 0; t < n_word; ++t) {
      const double tau = static_cast<double>(t) / rate;
      const double env = [&] {
        const double u = static_cast<double>(t) / static_cast<double>(n_word - 1);
        const double h = std::sin(kPi * u);
        return h * h;
      }();
      double v = std::sin(2.0 * kPi * f0 * tau + ph1) +
                 0.5 * std::sin(2.0 * kPi * 2.0 * f0 * tau + ph2) +
                 0.25 * std::sin(2.0 * kPi * 3.0 * f0 * tau + ph3);
      v /= 1.75;
      double s = amp * env * v;
      if (label == Label::PD) {
        s *= 1.0 + c.tremor_depth * std::sin(2.0 * kPi * c.tremor_hz * tau + tremor_phase);
      }
      if (word.planted) {
        s += kBurstNoiseAmp * amp * env * plant.normal();  // the extra burst cue
      }
      rec.samples[start + t] += s;
    }

    WordTimestamp ts;
    ts.word = word.token;
    ts.start_s = word.start_s + jitter * j1;
    ts.end_s = word.end_s + jitter * j2;
    rec.jittered.push_back(ts);
    rec.words.push_back(std::move(word));
  }
  // headroom clamp keeps the wav write lossless even for burst-noise tails
  for (auto& s : rec.samples) s = std::clamp(s, -0.98, 0.98);
  return rec;
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& config) {
  validate(config);
  SynthCorpus corpus;
  corpus.config = config;
  for (Label label : {Label::HC, Label::PD}) {
    for (std::size_t s = 0; s < config.subjects_per_class; ++s) {
      Rng subject(mix(mix(config.seed, s), 0x05));
      const double f0_scale = 1.0 + 0.01 * subject.uniform(-1.0, 1.0);
      for (std::size_t r = 0; r < config.recordings_per_subject; ++r) {
        corpus.recordings.push_back(make_recording(config, label, s, r, f0_scale));
      }
    }
  }
  return corpus;
}

AudioRecording as_recording(const SynthRecording& rec) {
  AudioRecording out;
  out.samples = rec.samples;
  out.sample_rate = rec.sample_rate;
  out.subject_id = rec.subject_id;
  out.label = rec.label;
  out.kind = Kind::Text;
  out.source_path = rec.id + ".wav";
  return out;
}

std::string write_corpus(const SynthCorpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  DatasetManifest manifest;
  manifest.working_rate = corpus.config.sample_rate;
  json truth = json::object();
  for (const auto& rec : corpus.recordings) {
    const std::string wav_name = rec.id + ".wav";
    const std::string ts_name = rec.id + ".json";
    const auto wav_path = fs::absolute(fs::path(dir) / wav_name);
    const auto ts_path = fs::absolute(fs::path(dir) / ts_name);
    write_wav(wav_path.string(), rec.samples, rec.sample_rate);
    save_timestamps(ts_path.string(), rec.jittered);

    ManifestEntry entry;
    entry.path = wav_path.string();
    entry.subject_id = rec.subject_id;
    entry.label = rec.label;
    entry.kind = Kind::Text;
    entry.timestamp_path = ts_path.string();
    manifest.entries.push_back(entry);

    json words = json::array();
    for (const auto& w : rec.words) {
      words.push_back({{"token", w.token},
                       {"start", w.start_s},
                       {"end", w.end_s},
                       {"planted", w.planted}});
    }
    truth[wav_name] = words;
  }
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  save_manifest(manifest_path, manifest);
  std::ofstream out(fs::path(dir) / "truth.json");
  if (!out) raise(Err::MissingFile, dir + "/truth.json: cannot open for writing");
  out << truth.dump(2) << "\n";
  return manifest_path;
}

std::map<std::string, std::vector<SynthWord>> load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Err::MissingFile, path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(Err::MalformedInput, path + ": " + e.what());
  }
  std::map<std::string, std::vector<SynthWord>> truth;
  for (const auto& [name, words] : doc.items()) {
    std::vector<SynthWord> list;
    for (const auto& w : words) {
      SynthWord sw;
      sw.token = w.at("token").get<std::string>();
      sw.start_s = w.at("start").get<double>();
      sw.end_s = w.at("end").get<double>();
      sw.planted = w.at("planted").get<bool>();
      list.push_back(std::move(sw));
    }
    truth[name] = std::move(list);
  }
  return truth;
}

}  // namespace pdspeech
