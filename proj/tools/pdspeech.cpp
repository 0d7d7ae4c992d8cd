#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdspeech/config.hpp"
#include "pdspeech/errors.hpp"
#include "pdspeech/gradcam.hpp"
#include "pdspeech/pipeline.hpp"
#include "pdspeech/synthgen.hpp"
#include "pdspeech/version.hpp"

namespace fs = std::filesystem;
using namespace pdspeech;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_config_opts(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.overrides, "key=value override, wins over the config file")
      ->take_all();
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_config(opts.config_path);
  for (const auto& o : opts.overrides) apply_override(cfg, o);
  return cfg;
}

void write_meta_file(const std::string& dir, const RunConfig& cfg) {
  save_config((fs::path(dir) / "config.json").string(), cfg);
  nlohmann::json doc{{"tool_version", kToolVersion},
                     {"config_hash", config_hash(cfg)},
                     {"seed", cfg.seed}};
  std::ofstream out(fs::path(dir) / "run_meta.json");
  if (!out) raise(Err::MissingFile, dir + "/run_meta.json: cannot open for writing");
  out << doc.dump(2) << "\n";
}

int cmd_synth(const CommonOpts& opts, const std::string& out_dir) {
  const RunConfig cfg = resolve_config(opts);
  const SynthCorpus corpus = generate_corpus(synth_params(cfg));
  fs::create_directories(out_dir);
  const std::string manifest = write_corpus(corpus, out_dir);
  write_meta_file(out_dir, cfg);
  std::cout << manifest << "\n";
  return 0;
}

int cmd_segment(const CommonOpts& opts, const std::string& manifest_path,
                const std::string& out_dir) {
  const RunConfig cfg = resolve_config(opts);
  const DatasetManifest manifest = load_manifest(manifest_path, cfg.working_rate);
  const auto chunks = collect_chunks(manifest, cfg, /*fit=*/false);
  fs::create_directories(out_dir);
  const std::string jsonl = (fs::path(out_dir) / "chunks.jsonl").string();
  write_chunk_dump(jsonl, (fs::path(out_dir) / "chunks.f32").string(), chunks);
  write_meta_file(out_dir, cfg);
  std::cout << jsonl << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& manifest_path,
              const std::string& out_dir) {
  const RunConfig cfg = resolve_config(opts);
  const DatasetManifest manifest = load_manifest(manifest_path, cfg.working_rate);
  const ExperimentReport rep = run_experiment(manifest, cfg, out_dir);
  std::cout << (fs::path(out_dir) / "report.json").string() << "\n";
  std::cout << "recording accuracy " << format_pct(rep.cnn_recording_agg.accuracy.mean) << " ± "
            << format_pct(rep.cnn_recording_agg.accuracy.stddev) << "\n";
  return 0;
}

int cmd_explain(const CommonOpts& opts, const std::string& model_path,
                const std::string& chunks_path, const std::string& out_dir) {
  const RunConfig cfg = resolve_config(opts);
  PdNet net = load_net(model_path);
  auto chunks = read_chunk_dump(chunks_path);
  if (chunks.empty()) raise(Err::EmptyInput, chunks_path + ": no chunks");

  std::vector<Attribution> atts;
  atts.reserve(chunks.size());
  for (auto& c : chunks) {
    const SpeechChunk fitted = fit_chunk(c, cfg.chunk_len);
    const CamResult cam = grad_cam(net, fitted.samples, 1);
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

  fs::create_directories(out_dir);
  const std::string meta = artifact_meta(cfg);
  write_attribution_csv((fs::path(out_dir) / "attributions.csv").string(), atts, meta);
  {
    const auto words = word_frequency_report(atts);
    std::string text = "# " + meta + "\nword,count\n";
    for (const auto& w : words) text += w.word + "," + std::to_string(w.count) + "\n";
    std::ofstream out(fs::path(out_dir) / "word_frequency.csv");
    if (!out) raise(Err::MissingFile, out_dir + "/word_frequency.csv: cannot open for writing");
    out << text;
  }

  // One heatmap per recording, chunks laid out on the recording's timeline.
  std::map<std::string, std::vector<Attribution>> by_rec;
  for (const auto& a : atts) by_rec[a.recording_ref].push_back(a);
  std::size_t idx = 0;
  for (const auto& [ref, rec_atts] : by_rec) {
    const std::string name = "heatmap_" + std::to_string(idx++) + ".svg";
    write_heatmap_svg((fs::path(out_dir) / name).string(), fs::path(ref).filename().string(),
                      rec_atts, meta);
  }

  std::vector<Attribution> hc, pd;
  for (const auto& a : atts) (a.label == Label::HC ? hc : pd).push_back(a);
  if (!hc.empty() && !pd.empty()) {
    write_class_average_svg((fs::path(out_dir) / "class_average.svg").string(),
                            class_averaged_map(hc), class_averaged_map(pd), meta);
  }
  write_meta_file(out_dir, cfg);
  std::cout << (fs::path(out_dir) / "attributions.csv").string() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  merge_reports(run_dirs, out_dir);
  std::cout << (fs::path(out_dir) / "report.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpretable speech screening pipeline"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonOpts synth_opts, segment_opts, train_opts, explain_opts;
  std::string synth_out, segment_manifest, segment_out, train_manifest, train_out;
  std::string explain_model, explain_chunks, explain_out, report_out;
  std::vector<std::string> report_runs;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  add_config_opts(synth, synth_opts);

  CLI::App* segment = app.add_subcommand("segment", "Cut manifest recordings into word chunks");
  segment->add_option("--manifest", segment_manifest, "dataset manifest JSON")->required();
  segment->add_option("--out", segment_out, "output directory")->required();
  add_config_opts(segment, segment_opts);

  CLI::App* train = app.add_subcommand(
      "train", "Train and evaluate over repeated subject-disjoint holdouts");
  train->add_option("--manifest", train_manifest, "dataset manifest JSON")->required();
  train->add_option("--out", train_out, "run output directory")->required();
  add_config_opts(train, train_opts);

  CLI::App* explain = app.add_subcommand("explain", "Attribution maps for a trained model");
  explain->add_option("--model", explain_model, "model file")->required();
  explain->add_option("--chunks", explain_chunks, "chunk dump (chunks.jsonl)")->required();
  explain->add_option("--out", explain_out, "output directory")->required();
  add_config_opts(explain, explain_opts);

  CLI::App* report = app.add_subcommand("report", "Merge run reports with matching config hash");
  report->add_option("--runs", report_runs, "run directories")->required()->take_all();
  report->add_option("--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 3;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_opts, synth_out);
    if (segment->parsed()) return cmd_segment(segment_opts, segment_manifest, segment_out);
    if (train->parsed()) return cmd_train(train_opts, train_manifest, train_out);
    if (explain->parsed()) return cmd_explain(explain_opts, explain_model, explain_chunks,
                                              explain_out);
    if (report->parsed()) return cmd_report(report_runs, report_out);
  } catch (const PdError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
