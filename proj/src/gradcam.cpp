#include "pdspeech/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace pdspeech {

std::vector<double> channel_means(const std::vector<double>& grads, std::size_t time) {
  if (time == 0 || grads.empty()) raise(Err::EmptyInput, "no gradients to average");
  if (grads.size() % time != 0) raise(Err::ShapeMismatch, "gradient size not a channel multiple");
  const std::size_t channels = grads.size() / time;
  std::vector<double> alpha(channels, 0.0);
  for (std::size_t k = 0; k < channels; ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t < time; ++t) acc += grads[k * time + t];
    alpha[k] = acc / static_cast<double>(time);
  }
  return alpha;
}

std::vector<double> weighted_channel_sum(const std::vector<double>& alpha,
                                         const std::vector<double>& activations,
                                         std::size_t time) {
  if (time == 0 || alpha.empty()) raise(Err::EmptyInput, "nothing to combine");
  if (activations.size() != alpha.size() * time) {
    raise(Err::ShapeMismatch, "activations do not match channels x time");
  }
  std::vector<double> map(time, 0.0);
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    for (std::size_t t = 0; t < time; ++t) map[t] += alpha[k] * activations[k * time + t];
  }
  return map;
}

CamResult grad_cam(PdNet& net, const std::vector<double>& samples, std::size_t class_id) {
  if (class_id >= kClasses) raise(Err::InvalidClass, "class id out of range");
  if (samples.size() != net.chunk_len) {
    raise(Err::ShapeMismatch, "chunk length does not match the net");
  }
  ad::Tape tape;
  auto x = ad::make_tensor({1, net.chunk_len}, samples);
  auto fwd = net_forward(tape, net, {x}, ad::BnMode::Eval);
  std::vector<double> seed(kClasses, 0.0);
  seed[class_id] = 1.0;
  tape.backward(fwd.logits[0], seed);

  const auto& a = *fwd.a_last[0];
  CamResult res;
  res.weights = channel_means(a.g, net.chunk_len);
  res.map = weighted_channel_sum(res.weights, a.v, net.chunk_len);
  for (std::size_t c = 0; c < kClasses; ++c) res.logits[c] = fwd.logits[0]->v[c];
  for (auto& p : net.trainable()) p->zero_grad();  // keep the sweep side-effect free
  return res;
}

std::vector<double> class_averaged_map(const std::vector<Attribution>& atts) {
  if (atts.empty()) raise(Err::EmptyInput, "no maps to average");
  const Label label = atts.front().label;
  const std::size_t len = atts.front().map.size();
  std::vector<double> mean(len, 0.0);
  for (const auto& a : atts) {
    if (a.label != label) raise(Err::MixedClasses, "maps span both classes");
    if (a.map.size() != len) raise(Err::LengthMismatch, "maps differ in length");
    for (std::size_t t = 0; t < len; ++t) mean[t] += a.map[t];
  }
  for (auto& v : mean) v /= static_cast<double>(atts.size());
  return mean;
}

NormalizedScores normalize_per_recording(const std::vector<double>& raw) {
  if (raw.empty()) raise(Err::EmptyRecording, "recording has no scored chunks");
  double peak = 0.0;
  for (double v : raw) peak = std::max(peak, std::fabs(v));
  NormalizedScores out;
  out.scores = raw;
  if (peak == 0.0) {
    out.all_zero = true;
    return out;
  }
  for (auto& v : out.scores) v /= peak;
  return out;
}

DecileSelection select_top_decile(const std::vector<double>& scores) {
  if (scores.empty()) raise(Err::EmptyInput, "no scores to select from");
  DecileSelection out;
  out.selected.assign(scores.size(), false);
  if (scores.size() == 1) {
    out.threshold = scores[0];
    out.degenerate = true;
    return out;
  }
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const double rank = 0.9 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  out.threshold = lo + 1 < sorted.size()
                      ? sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
                      : sorted[lo];
  for (std::size_t i = 0; i < scores.size(); ++i) out.selected[i] = scores[i] > out.threshold;
  return out;
}

std::vector<WordCount> word_frequency_report(const std::vector<Attribution>& atts,
                                             std::size_t top_n) {
  std::map<std::string, std::size_t> counts;
  for (const auto& a : atts) {
    if (!a.selected) continue;
    for (const auto& w : a.words) ++counts[w];
  }
  std::vector<WordCount> out;
  out.reserve(counts.size());
  for (const auto& [word, count] : counts) out.push_back({word, count});
  std::sort(out.begin(), out.end(), [](const WordCount& a, const WordCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.word < b.word;
  });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

void score_attributions(std::vector<Attribution>& atts) {
  if (atts.empty()) return;
  for (auto& a : atts) {
    if (a.map.empty()) raise(Err::EmptyInput, a.recording_ref + ": chunk has no map");
    double acc = 0.0;
    for (double v : a.map) acc += v;
    a.raw_score = acc / static_cast<double>(a.map.size());
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < atts.size(); ++i) groups[atts[i].recording_ref].push_back(i);
  for (const auto& [ref, idx] : groups) {
    std::vector<double> raw;
    raw.reserve(idx.size());
    for (auto i : idx) raw.push_back(atts[i].raw_score);
    const auto norm = normalize_per_recording(raw);
    const auto sel = select_top_decile(norm.scores);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      atts[idx[j]].norm_score = norm.scores[j];
      atts[idx[j]].selected = sel.selected[j];
    }
  }
}

namespace {

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// white toward blue for negative, white toward red for positive
std::string diverging_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  const double a = std::fabs(v);
  const int r = v < 0 ? 33 : 178;
  const int g = v < 0 ? 102 : 24;
  const int b = v < 0 ? 172 : 43;
  auto mixc = [&](int c) { return static_cast<int>(std::lround(255.0 + a * (c - 255.0))); };
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", mixc(r), mixc(g), mixc(b));
  return buf;
}

void draw_strip(std::ostringstream& svg, const std::vector<double>& map, double peak, double x0,
                double y0, double width, double height) {
  const std::size_t cells = std::min<std::size_t>(map.size(), 64);
  const std::size_t per = (map.size() + cells - 1) / cells;
  for (std::size_t c = 0; c * per < map.size(); ++c) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t t = c * per; t < std::min(map.size(), (c + 1) * per); ++t, ++n) acc += map[t];
    const double v = peak > 0.0 ? acc / static_cast<double>(n) / peak : 0.0;
    const double cw = width / static_cast<double>((map.size() + per - 1) / per);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n",
                  x0 + cw * static_cast<double>(c), y0, cw + 0.05, height,
                  diverging_color(v).c_str());
    svg << buf;
  }
}

}  // namespace

void write_attribution_csv(const std::string& path, const std::vector<Attribution>& atts,
                           const std::string& meta) {
  std::ofstream out(path);
  if (!out) raise(Err::MissingFile, path + ": cannot open for writing");
  if (!meta.empty()) out << "# " << meta << "\n";
  out << "recording,chunk_start_s,chunk_end_s,words,raw_score,norm_score,selected\n";
  for (const auto& a : atts) {
    out << a.recording_ref << ',' << num(a.chunk_start_s) << ',' << num(a.chunk_end_s) << ','
        << join_words(a.words) << ',' << num(a.raw_score) << ',' << num(a.norm_score) << ','
        << (a.selected ? 1 : 0) << '\n';
  }
}

void write_heatmap_svg(const std::string& path, const std::string& title,
                       const std::vector<Attribution>& atts, const std::string& meta) {
  if (atts.empty()) raise(Err::EmptyInput, path + ": nothing to draw");
  double t0 = atts.front().chunk_start_s, t1 = atts.front().chunk_end_s;
  double peak = 0.0;
  for (const auto& a : atts) {
    t0 = std::min(t0, a.chunk_start_s);
    t1 = std::max(t1, a.chunk_end_s);
    for (double v : a.map) peak = std::max(peak, std::fabs(v));
  }
  const double span = std::max(t1 - t0, 1e-9);
  const double width = 960.0, left = 20.0, top = 30.0, strip_h = 48.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"120\" "
         "viewBox=\"0 0 1000 120\">\n";
  if (!meta.empty()) svg << "<!-- " << meta << " -->\n";
  svg << "<rect width=\"1000\" height=\"120\" fill=\"white\"/>\n";
  svg << "<text x=\"20\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << title
      << "</text>\n";
  for (const auto& a : atts) {
    const double x0 = left + width * (a.chunk_start_s - t0) / span;
    const double x1 = left + width * (a.chunk_end_s - t0) / span;
    draw_strip(svg, a.map, peak, x0, top, x1 - x0, strip_h);
    if (a.selected) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" "
                    "stroke=\"black\" stroke-width=\"1.5\"/>\n",
                    x0, top, x1 - x0, strip_h);
      svg << buf;
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"10\" "
                  "text-anchor=\"middle\">%s</text>\n",
                  0.5 * (x0 + x1), top + strip_h + 14.0, join_words(a.words).c_str());
    svg << buf;
  }
  svg << "</svg>\n";
  std::ofstream out(path);
  if (!out) raise(Err::MissingFile, path + ": cannot open for writing");
  out << svg.str();
}

void write_class_average_svg(const std::string& path, const std::vector<double>& hc_map,
                             const std::vector<double>& pd_map, const std::string& meta) {
  if (hc_map.empty() || pd_map.empty()) raise(Err::EmptyInput, path + ": missing class map");
  double peak = 0.0;
  for (double v : hc_map) peak = std::max(peak, std::fabs(v));
  for (double v : pd_map) peak = std::max(peak, std::fabs(v));

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"170\" "
         "viewBox=\"0 0 1000 170\">\n";
  if (!meta.empty()) svg << "<!-- " << meta << " -->\n";
  svg << "<rect width=\"1000\" height=\"170\" fill=\"white\"/>\n";
  svg << "<text x=\"20\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">class-average "
         "attribution</text>\n";
  svg << "<text x=\"20\" y=\"46\" font-family=\"sans-serif\" font-size=\"11\">HC</text>\n";
  draw_strip(svg, hc_map, peak, 60.0, 34.0, 920.0, 40.0);
  svg << "<text x=\"20\" y=\"106\" font-family=\"sans-serif\" font-size=\"11\">PD</text>\n";
  draw_strip(svg, pd_map, peak, 60.0, 94.0, 920.0, 40.0);
  svg << "</svg>\n";
  std::ofstream out(path);
  if (!out) raise(Err::MissingFile, path + ": cannot open for writing");
  out << svg.str();
}

}  // namespace pdspeech
