#include "pdspeech/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "pdspeech/errors.hpp"
#include "pdspeech/version.hpp"

namespace pdspeech {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<SpeechChunk> collect_chunks(const DatasetManifest& manifest, const RunConfig& cfg,
                                        bool fit) {
  const EnvelopeParams env = envelope_params(cfg);
  std::vector<SpeechChunk> all;
  for (const auto& entry : manifest.entries) {
    const AudioRecording rec = load_recording(entry, cfg.working_rate);
    std::vector<SpeechChunk> chunks;
    if (cfg.strategy == Strategy::Silence) {
      chunks = segment_by_silence(rec, env);
    } else {
      if (entry.timestamp_path.empty()) {
        raise(Err::MissingFile,
              entry.path + ": the " + strategy_name(cfg.strategy) +
                  " strategy needs word timestamps, and the manifest entry has none");
      }
      const auto ts = load_timestamps(entry.timestamp_path);
      chunks = cfg.strategy == Strategy::Words
                   ? segment_by_words(rec, ts, cfg.words_per_chunk)
                   : segment_hybrid(rec, ts, cfg.words_per_chunk, env, cfg.snap_tolerance_s);
    }
    if (fit) {
      for (auto& c : chunks) c = fit_chunk(c, cfg.chunk_len);
    }
    all.insert(all.end(), std::make_move_iterator(chunks.begin()),
               std::make_move_iterator(chunks.end()));
  }
  return all;
}

std::string artifact_meta(const RunConfig& cfg) {
  return std::string("version=") + kToolVersion + " config_hash=" + config_hash(cfg) +
         " seed=" + std::to_string(cfg.seed);
}

namespace {

json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
          {"f1", m.f1},             {"tp", m.tp},               {"fp", m.fp},
          {"fn", m.fn},             {"tn", m.tn},               {"degenerate", m.degenerate}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.accuracy = j.at("accuracy").get<double>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.tp = j.at("tp").get<std::size_t>();
  m.fp = j.at("fp").get<std::size_t>();
  m.fn = j.at("fn").get<std::size_t>();
  m.tn = j.at("tn").get<std::size_t>();
  m.degenerate = j.at("degenerate").get<bool>();
  return m;
}

json summary_json(const MetricSummary& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}};
}

json eval_json(const EvalReport& r) {
  return {{"accuracy", summary_json(r.accuracy)},
          {"precision", summary_json(r.precision)},
          {"recall", summary_json(r.recall)},
          {"f1", summary_json(r.f1)}};
}

json ttest_json(const PairedTestResult& t) {
  // An infinite statistic (zero-variance differences) serializes as null;
  // the zero_variance flag carries the meaning.
  return {{"t_stat", std::isfinite(t.t_stat) ? json(t.t_stat) : json()},
          {"p_value", t.p_value},
          {"dof", t.dof},
          {"zero_variance", t.zero_variance}};
}

json word_counts_json(const std::vector<WordCount>& words) {
  json arr = json::array();
  for (const auto& w : words) arr.push_back({{"word", w.word}, {"count", w.count}});
  return arr;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) raise(Err::MissingFile, path + ": cannot open for writing");
  out << text;
}

std::string pct_cell(const MetricSummary& s) {
  return format_pct(s.mean) + " ± " + format_pct(s.stddev);
}

// Mirror of the published table layout: one row per model, percentage cells
// as "mean ± std", columns Accuracy, Precision, Recall, F1-Score.
void write_metrics_csv(const std::string& path, const EvalReport& cnn_rec,
                       const EvalReport& cnn_chunk, const EvalReport& knn_rec,
                       const EvalReport& knn_chunk, const std::string& meta) {
  std::string text;
  if (!meta.empty()) text += "# " + meta + "\n";
  text += "Model,Accuracy,Precision,Recall,F1-Score\n";
  auto row = [&](const char* name, const EvalReport& r) {
    text += std::string(name) + "," + pct_cell(r.accuracy) + "," + pct_cell(r.precision) + "," +
            pct_cell(r.recall) + "," + pct_cell(r.f1) + "\n";
  };
  row("CNN (recording)", cnn_rec);
  row("CNN (chunk)", cnn_chunk);
  row("KNN (recording)", knn_rec);
  row("KNN (chunk)", knn_chunk);
  write_text(path, text);
}

void write_word_csv(const std::string& path, const std::vector<WordCount>& words,
                    const std::string& meta) {
  std::string text;
  if (!meta.empty()) text += "# " + meta + "\n";
  text += "word,count\n";
  for (const auto& w : words) text += w.word + "," + std::to_string(w.count) + "\n";
  write_text(path, text);
}

void write_run_meta(const std::string& dir, const std::string& hash, std::uint64_t seed) {
  json doc{{"tool_version", kToolVersion}, {"config_hash", hash}, {"seed", seed}};
  write_text((fs::path(dir) / "run_meta.json").string(), doc.dump(2) + "\n");
}

void write_class_maps(const std::string& path, const std::vector<Attribution>& atts,
                      const std::string& meta) {
  std::vector<Attribution> hc, pd;
  for (const auto& a : atts) (a.label == Label::HC ? hc : pd).push_back(a);
  if (hc.empty() || pd.empty()) return;  // single-class runs have no comparison to draw
  write_class_average_svg(path, class_averaged_map(hc), class_averaged_map(pd), meta);
}

json report_json_doc(const ExperimentReport& rep, const RunConfig& cfg) {
  json doc;
  doc["tool_version"] = kToolVersion;
  doc["config_hash"] = rep.config_hash;
  doc["seed"] = rep.seed;
  doc["config"] = json::parse(config_text(cfg));

  json iters = json::array();
  for (const auto& it : rep.iterations) {
    iters.push_back({{"iteration", it.plan.iteration},
                     {"split_seed", it.plan.seed},
                     {"train_subjects", it.plan.train_subjects},
                     {"test_subjects", it.plan.test_subjects},
                     {"best_epoch", it.best_epoch},
                     {"epochs_run", it.epochs_run},
                     {"model_file", it.model_file},
                     {"cnn", json{{"chunk", metrics_json(it.cnn_chunk)},
                                  {"recording", metrics_json(it.cnn_recording)}}},
                     {"knn", json{{"chunk", metrics_json(it.knn_chunk)},
                                  {"recording", metrics_json(it.knn_recording)}}}});
  }
  doc["iterations"] = std::move(iters);

  doc["aggregate"] = {{"cnn", json{{"chunk", eval_json(rep.cnn_chunk_agg)},
                                   {"recording", eval_json(rep.cnn_recording_agg)}}},
                      {"knn", json{{"chunk", eval_json(rep.knn_chunk_agg)},
                                   {"recording", eval_json(rep.knn_recording_agg)}}}};
  doc["significance"] = {
      {"cnn_vs_knn_chunk_accuracy", ttest_json(rep.cnn_vs_knn_chunk)},
      {"cnn_vs_knn_recording_accuracy", ttest_json(rep.cnn_vs_knn_recording)}};

  std::size_t selected = 0;
  for (const auto& a : rep.attributions) selected += a.selected ? 1 : 0;
  doc["attribution"] = {{"chunks", rep.attributions.size()},
                        {"selected", selected},
                        {"top_words", word_counts_json(rep.top_words)}};
  return doc;
}

}  // namespace

ExperimentReport run_experiment(const DatasetManifest& manifest, const RunConfig& cfg,
                                const std::string& out_dir) {
  fs::create_directories(out_dir);
  const auto chunks = collect_chunks(manifest, cfg, /*fit=*/true);
  if (chunks.empty()) raise(Err::EmptyInput, "no chunks from the manifest");
  const auto plans = make_splits(manifest, cfg.holdout_iterations, cfg.test_frac, cfg.seed);

  ExperimentReport rep;
  rep.config_hash = config_hash(cfg);
  rep.seed = cfg.seed;
  const std::string meta = artifact_meta(cfg);

  std::vector<Metrics> cnn_chunk_all, cnn_rec_all, knn_chunk_all, knn_rec_all;
  std::vector<double> cnn_chunk_acc, cnn_rec_acc, knn_chunk_acc, knn_rec_acc;

  for (const auto& plan : plans) {
    if (!audit_no_leakage(plan, chunks)) {
      raise(Err::DivergenceDetected, "internal: subject leakage across a holdout split");
    }
    auto on_side = [](const std::vector<std::string>& side, const std::string& subject) {
      return std::binary_search(side.begin(), side.end(), subject);
    };
    std::vector<SpeechChunk> train_chunks, test_chunks;
    for (const auto& c : chunks) {
      if (on_side(plan.train_subjects, c.subject_id)) {
        train_chunks.push_back(c);
      } else if (on_side(plan.test_subjects, c.subject_id)) {
        test_chunks.push_back(c);
      }
    }

    Hyper hp = hyper_params(cfg);
    hp.seed = cfg.seed + 1000003ULL * plan.iteration;
    PdNet net = init_net(cfg.chunk_len, hp.seed);
    const TrainResult tr = train(net, train_chunks, hp);
    const EvalOutcome cnn = evaluate(net, test_chunks);
    const EvalOutcome knn = knn_evaluate(train_chunks, test_chunks, cfg.knn_k);

    IterationReport it;
    it.plan = plan;
    it.cnn_chunk = cnn.chunk_level;
    it.cnn_recording = cnn.recording_level;
    it.knn_chunk = knn.chunk_level;
    it.knn_recording = knn.recording_level;
    it.best_epoch = tr.best_epoch;
    it.epochs_run = tr.epochs_run;
    it.model_file = "model_iter" + std::to_string(plan.iteration) + ".bin";
    save_net(net, (fs::path(out_dir) / it.model_file).string());

    // Attribution of every test chunk toward the PD logit, scored within
    // this iteration so the decile never mixes two models' scales.
    std::vector<Attribution> atts;
    atts.reserve(test_chunks.size());
    for (const auto& c : test_chunks) {
      const CamResult cam = grad_cam(net, c.samples, 1);
      Attribution a;
      a.recording_ref = c.recording_ref;
      a.chunk_start_s = c.start_s;
      a.chunk_end_s = c.end_s;
      a.words = c.words;
      a.label = c.label;
      a.map = cam.map;
      atts.push_back(std::move(a));
    }
    score_attributions(atts);
    rep.attributions.insert(rep.attributions.end(), std::make_move_iterator(atts.begin()),
                            std::make_move_iterator(atts.end()));

    cnn_chunk_all.push_back(it.cnn_chunk);
    cnn_rec_all.push_back(it.cnn_recording);
    knn_chunk_all.push_back(it.knn_chunk);
    knn_rec_all.push_back(it.knn_recording);
    cnn_chunk_acc.push_back(it.cnn_chunk.accuracy);
    cnn_rec_acc.push_back(it.cnn_recording.accuracy);
    knn_chunk_acc.push_back(it.knn_chunk.accuracy);
    knn_rec_acc.push_back(it.knn_recording.accuracy);
    rep.iterations.push_back(std::move(it));
  }

  rep.cnn_chunk_agg = aggregate(cnn_chunk_all);
  rep.cnn_recording_agg = aggregate(cnn_rec_all);
  rep.knn_chunk_agg = aggregate(knn_chunk_all);
  rep.knn_recording_agg = aggregate(knn_rec_all);
  rep.cnn_vs_knn_chunk = paired_t_test(cnn_chunk_acc, knn_chunk_acc);
  rep.cnn_vs_knn_recording = paired_t_test(cnn_rec_acc, knn_rec_acc);

  rep.top_words = word_frequency_report(rep.attributions);

  write_text((fs::path(out_dir) / "report.json").string(),
             report_json_doc(rep, cfg).dump(2) + "\n");
  write_metrics_csv((fs::path(out_dir) / "report.csv").string(), rep.cnn_recording_agg,
                    rep.cnn_chunk_agg, rep.knn_recording_agg, rep.knn_chunk_agg, meta);
  write_word_csv((fs::path(out_dir) / "word_frequency.csv").string(), rep.top_words, meta);
  write_attribution_csv((fs::path(out_dir) / "attributions.csv").string(), rep.attributions,
                        meta);
  write_class_maps((fs::path(out_dir) / "class_average.svg").string(), rep.attributions, meta);
  save_config((fs::path(out_dir) / "config.json").string(), cfg);
  write_run_meta(out_dir, rep.config_hash, rep.seed);
  return rep;
}

void merge_reports(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  if (run_dirs.empty()) raise(Err::EmptyInput, "no run directories to merge");

  std::vector<json> docs;
  for (const auto& dir : run_dirs) {
    const std::string path = (fs::path(dir) / "report.json").string();
    std::ifstream in(path);
    if (!in) raise(Err::MissingFile, path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      raise(Err::MalformedInput, path + ": " + e.what());
    }
    docs.push_back(std::move(doc));
  }

  std::string hash, version;
  try {
    hash = docs.front().at("config_hash").get<std::string>();
    version = docs.front().at("tool_version").get<std::string>();
    for (std::size_t i = 1; i < docs.size(); ++i) {
      if (docs[i].at("config_hash").get<std::string>() != hash) {
        raise(Err::HashMismatch, run_dirs[i] + ": config hash " +
                                     docs[i].at("config_hash").get<std::string>() +
                                     " does not match " + hash);
      }
      if (docs[i].at("tool_version").get<std::string>() != version) {
        raise(Err::HashMismatch, run_dirs[i] + ": tool version mismatch");
      }
    }
  } catch (const json::exception& e) {
    raise(Err::MalformedInput, std::string("report.json: ") + e.what());
  }

  json merged;
  json all_iters = json::array();
  std::vector<Metrics> cnn_chunk_all, cnn_rec_all, knn_chunk_all, knn_rec_all;
  std::vector<double> cnn_chunk_acc, cnn_rec_acc, knn_chunk_acc, knn_rec_acc;
  std::map<std::string, std::size_t> word_counts;
  std::size_t att_chunks = 0, att_selected = 0;
  try {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (const auto& it : docs[d].at("iterations")) {
        json copy = it;
        copy["run"] = fs::path(run_dirs[d]).filename().string();
        all_iters.push_back(std::move(copy));
        const Metrics cc = metrics_from_json(it.at("cnn").at("chunk"));
        const Metrics cr = metrics_from_json(it.at("cnn").at("recording"));
        const Metrics kc = metrics_from_json(it.at("knn").at("chunk"));
        const Metrics kr = metrics_from_json(it.at("knn").at("recording"));
        cnn_chunk_all.push_back(cc);
        cnn_rec_all.push_back(cr);
        knn_chunk_all.push_back(kc);
        knn_rec_all.push_back(kr);
        cnn_chunk_acc.push_back(cc.accuracy);
        cnn_rec_acc.push_back(cr.accuracy);
        knn_chunk_acc.push_back(kc.accuracy);
        knn_rec_acc.push_back(kr.accuracy);
      }
      const auto& att = docs[d].at("attribution");
      att_chunks += att.at("chunks").get<std::size_t>();
      att_selected += att.at("selected").get<std::size_t>();
      for (const auto& w : att.at("top_words")) {
        word_counts[w.at("word").get<std::string>()] += w.at("count").get<std::size_t>();
      }
    }
  } catch (const json::exception& e) {
    raise(Err::MalformedInput, std::string("report.json: ") + e.what());
  }

  const EvalReport cnn_chunk_agg = aggregate(cnn_chunk_all);
  const EvalReport cnn_rec_agg = aggregate(cnn_rec_all);
  const EvalReport knn_chunk_agg = aggregate(knn_chunk_all);
  const EvalReport knn_rec_agg = aggregate(knn_rec_all);

  std::vector<WordCount> words;
  for (const auto& [w, n] : word_counts) words.push_back({w, n});
  std::sort(words.begin(), words.end(), [](const WordCount& a, const WordCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.word < b.word;
  });
  if (words.size() > 10) words.resize(10);

  merged["tool_version"] = version;
  merged["config_hash"] = hash;
  merged["seed"] = docs.front().at("seed");
  merged["config"] = docs.front().at("config");
  merged["merged_runs"] = run_dirs.size();
  merged["iterations"] = std::move(all_iters);
  merged["aggregate"] = {{"cnn", json{{"chunk", eval_json(cnn_chunk_agg)},
                                      {"recording", eval_json(cnn_rec_agg)}}},
                         {"knn", json{{"chunk", eval_json(knn_chunk_agg)},
                                      {"recording", eval_json(knn_rec_agg)}}}};
  merged["significance"] = {
      {"cnn_vs_knn_chunk_accuracy", ttest_json(paired_t_test(cnn_chunk_acc, knn_chunk_acc))},
      {"cnn_vs_knn_recording_accuracy",
       ttest_json(paired_t_test(cnn_rec_acc, knn_rec_acc))}};
  merged["attribution"] = {{"chunks", att_chunks},
                           {"selected", att_selected},
                           {"top_words", word_counts_json(words)}};

  fs::create_directories(out_dir);
  const std::string meta = std::string("version=") + version + " config_hash=" + hash +
                           " seed=" + docs.front().at("seed").dump();
  write_text((fs::path(out_dir) / "report.json").string(), merged.dump(2) + "\n");
  write_metrics_csv((fs::path(out_dir) / "report.csv").string(), cnn_rec_agg, cnn_chunk_agg,
                    knn_rec_agg, knn_chunk_agg, meta);
  write_word_csv((fs::path(out_dir) / "word_frequency.csv").string(), words, meta);
  write_run_meta(out_dir, hash, docs.front().at("seed").get<std::uint64_t>());
}

}  // namespace pdspeech
