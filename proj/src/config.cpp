#include "pdspeech/config.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <vector>

#include <json.hpp>

#include "pdspeech/errors.hpp"

namespace pdspeech {

using nlohmann::json;

Strategy strategy_from_string(const std::string& s) {
  if (s == "silence") return Strategy::Silence;
  if (s == "words") return Strategy::Words;
  if (s == "hybrid") return Strategy::Hybrid;
  raise(Err::InvalidConfig, "unknown strategy '" + s + "' (expected silence, words, or hybrid)");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Silence: return "silence";
    case Strategy::Words: return "words";
    case Strategy::Hybrid: return "hybrid";
  }
  return "hybrid";
}

namespace {

// One row per config key: how to read it into JSON and how to set it from
// JSON. load, save, and overrides all walk this same table.
struct Field {
  const char* key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T checked(const json& v, const char* key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    raise(Err::InvalidConfig, std::string("bad value for '") + key + "'");
  }
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto num = [&f](const char* key, auto member) {
      using T = std::decay_t<decltype(std::declval<RunConfig>().*member)>;
      f.push_back({key, [member](const RunConfig& c) { return json(c.*member); },
                   [member, key](RunConfig& c, const json& v) { c.*member = checked<T>(v, key); }});
    };
    num("working_rate", &RunConfig::working_rate);
    num("env_window_s", &RunConfig::env_window_s);
    num("env_hop_s", &RunConfig::env_hop_s);
    num("env_rel_threshold", &RunConfig::env_rel_threshold);
    num("env_min_silence_s", &RunConfig::env_min_silence_s);
    f.push_back({"strategy",
                 [](const RunConfig& c) { return json(strategy_name(c.strategy)); },
                 [](RunConfig& c, const json& v) {
                   c.strategy = strategy_from_string(checked<std::string>(v, "strategy"));
                 }});
    num("words_per_chunk", &RunConfig::words_per_chunk);
    num("snap_tolerance_s", &RunConfig::snap_tolerance_s);
    num("chunk_len", &RunConfig::chunk_len);
    num("lr", &RunConfig::lr);
    num("epochs", &RunConfig::epochs);
    num("batch_size", &RunConfig::batch_size);
    num("early_stop_patience", &RunConfig::early_stop_patience);
    num("val_frac", &RunConfig::val_frac);
    num("holdout_iterations", &RunConfig::holdout_iterations);
    num("test_frac", &RunConfig::test_frac);
    num("knn_k", &RunConfig::knn_k);
    num("synth_subjects_per_class", &RunConfig::synth_subjects_per_class);
    num("synth_recordings_per_subject", &RunConfig::synth_recordings_per_subject);
    num("synth_words_per_recording", &RunConfig::synth_words_per_recording);
    num("synth_planted_per_recording", &RunConfig::synth_planted_per_recording);
    num("synth_word_dur_s", &RunConfig::synth_word_dur_s);
    num("synth_gap_dur_s", &RunConfig::synth_gap_dur_s);
    num("synth_f0_hc", &RunConfig::synth_f0_hc);
    num("synth_f0_pd", &RunConfig::synth_f0_pd);
    num("synth_tremor_hz", &RunConfig::synth_tremor_hz);
    num("synth_tremor_depth", &RunConfig::synth_tremor_depth);
    num("synth_timestamp_jitter_s", &RunConfig::synth_timestamp_jitter_s);
    num("seed", &RunConfig::seed);
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

void apply_document(RunConfig& cfg, const json& doc, const std::string& origin) {
  if (!doc.is_object()) raise(Err::InvalidConfig, origin + ": config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const Field* f = find_field(key);
    if (!f) raise(Err::InvalidConfig, origin + ": unknown config key '" + key + "'");
    f->set(cfg, value);
  }
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Err::MissingFile, path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    raise(Err::InvalidConfig, path + ": " + e.what());
  }
  RunConfig cfg;
  apply_document(cfg, doc, path);
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    raise(Err::InvalidConfig, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const Field* f = find_field(key);
  if (!f) raise(Err::InvalidConfig, "unknown config key '" + key + "'");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = json(text);  // bare strings, e.g. strategy=hybrid
  f->set(cfg, value);
}

std::string config_text(const RunConfig& cfg) {
  json doc = json::object();
  for (const auto& f : fields()) doc[f.key] = f.get(cfg);
  return doc.dump(2) + "\n";
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) raise(Err::MissingFile, path + ": cannot open for writing");
  out << config_text(cfg);
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = config_text(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EnvelopeParams envelope_params(const RunConfig& cfg) {
  EnvelopeParams p;
  p.window_s = cfg.env_window_s;
  p.hop_s = cfg.env_hop_s;
  p.rel_threshold = cfg.env_rel_threshold;
  p.min_silence_s = cfg.env_min_silence_s;
  return p;
}

Hyper hyper_params(const RunConfig& cfg) {
  Hyper hp;
  hp.lr = cfg.lr;
  hp.epochs = cfg.epochs;
  hp.batch_size = cfg.batch_size;
  hp.early_stop_patience = cfg.early_stop_patience;
  hp.val_frac = cfg.val_frac;
  hp.seed = cfg.seed;
  return hp;
}

SynthConfig synth_params(const RunConfig& cfg) {
  SynthConfig sc;
  sc.subjects_per_class = cfg.synth_subjects_per_class;
  sc.recordings_per_subject = cfg.synth_recordings_per_subject;
  sc.words_per_recording = cfg.synth_words_per_recording;
  sc.planted_per_recording = cfg.synth_planted_per_recording;
  sc.word_dur_s = cfg.synth_word_dur_s;
  sc.gap_dur_s = cfg.synth_gap_dur_s;
  sc.f0_hc = cfg.synth_f0_hc;
  sc.f0_pd = cfg.synth_f0_pd;
  sc.tremor_hz = cfg.synth_tremor_hz;
  sc.tremor_depth = cfg.synth_tremor_depth;
  sc.timestamp_jitter_s = cfg.synth_timestamp_jitter_s;
  sc.sample_rate = cfg.working_rate;
  sc.seed = cfg.seed;
  return sc;
}

}  // namespace pdspeech
