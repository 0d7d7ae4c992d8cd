#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pdspeech/net.hpp"
#include "pdspeech/segmentation.hpp"

namespace pdspeech {

// Temporal attribution for one chunk: channel weights are the time-averaged
// logit gradients on the final activation block, the map is their weighted
// channel sum. The map keeps its sign; no rectification is applied.
struct CamResult {
  std::vector<double> weights;  // one per final-block channel
  std::vector<double> map;      // one per time step
  std::array<double, kClasses> logits{};
};

// alpha_k = mean over time of grads[k*time + t]
std::vector<double> channel_means(const std::vector<double>& grads, std::size_t time);

// L(t) = sum_k alpha[k] * activations[k*time + t]
std::vector<double> weighted_channel_sum(const std::vector<double>& alpha,
                                         const std::vector<double>& activations,
                                         std::size_t time);

// Runs the net on one fitted chunk in inference mode, seeds the chosen logit
// with gradient one, and reads the attribution off the final activations.
CamResult grad_cam(PdNet& net, const std::vector<double>& samples, std::size_t class_id);

// One scored chunk as reported to the user.
struct Attribution {
  std::string recording_ref;
  double chunk_start_s = 0.0;
  double chunk_end_s = 0.0;
  std::vector<std::string> words;
  Label label = Label::HC;
  std::vector<double> map;
  double raw_score = 0.0;   // mean of the map
  double norm_score = 0.0;  // raw score over the recording's peak magnitude
  bool selected = false;
};

// Pointwise mean over maps that must all belong to one class.
std::vector<double> class_averaged_map(const std::vector<Attribution>& atts);

struct NormalizedScores {
  std::vector<double> scores;
  bool all_zero = false;  // left unscaled when every score is zero
};

// Divides one recording's raw scores by their largest magnitude, keeping sign.
NormalizedScores normalize_per_recording(const std::vector<double>& raw);

struct DecileSelection {
  std::vector<bool> selected;  // strictly above the 90th percentile
  double threshold = 0.0;
  bool degenerate = false;  // single score: nothing can sit above it
};

// 90th percentile by linear interpolation between order statistics.
DecileSelection select_top_decile(const std::vector<double>& scores);

struct WordCount {
  std::string word;
  std::size_t count = 0;
};

// Counts words over the selected attributions; count descending, ties
// alphabetical, truncated to top_n.
std::vector<WordCount> word_frequency_report(const std::vector<Attribution>& atts,
                                             std::size_t top_n = 10);

// Fills raw/norm scores and selection flags in place: raw score per chunk,
// then normalization and top-decile selection within each recording.
void score_attributions(std::vector<Attribution>& atts);

// meta, when nonempty, is embedded as a leading '#' comment line.
void write_attribution_csv(const std::string& path, const std::vector<Attribution>& atts,
                           const std::string& meta = "");

// One horizontal strip per chunk, diverging palette (negative blue, positive
// red), word labels underneath.
void write_heatmap_svg(const std::string& path, const std::string& title,
                       const std::vector<Attribution>& atts, const std::string& meta = "");

// Side-by-side class-average strips.
void write_class_average_svg(const std::string& path, const std::vector<double>& hc_map,
                             const std::vector<double>& pd_map, const std::string& meta = "");

}  // namespace pdspeech
