#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdspeech/net.hpp"
#include "pdspeech/segmentation.hpp"
#include "pdspeech/stats.hpp"

namespace pdspeech {

struct SplitPlan {
  std::size_t iteration = 0;  // 1-based
  std::vector<std::string> train_subjects;  // sorted
  std::vector<std::string> test_subjects;   // sorted
  std::uint64_t seed = 0;
};

// Subject-level stratified splits: per class, round(test_frac * count) test
// subjects (at least 1, at most count - 1), drawn independently per iteration.
std::vector<SplitPlan> make_splits(const DatasetManifest& manifest, std::size_t iterations,
                                   double test_frac, std::uint64_t seed);

bool subjects_disjoint(const SplitPlan& plan);

// True when no chunk's subject appears on both sides of the plan.
bool audit_no_leakage(const SplitPlan& plan, const std::vector<SpeechChunk>& chunks);

struct Hyper {
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::size_t early_stop_patience = 5;
  double val_frac = 0.15;  // chunk-level carve from the training split
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean minibatch training loss per epoch
  std::vector<double> val_loss;    // eval-mode loss on the carved validation chunks
  std::size_t best_epoch = 0;      // epoch whose snapshot was restored (0-based)
  std::size_t epochs_run = 0;
};

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}
  void step(const std::vector<ad::TensorPtr>& params);

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

TrainResult train(PdNet& net, const std::vector<SpeechChunk>& chunks, const Hyper& hp);

struct RecordingVote {
  std::string recording_ref;
  Label predicted = Label::HC;
  Label actual = Label::HC;
  std::size_t pd_votes = 0, hc_votes = 0;
};

struct EvalOutcome {
  Metrics chunk_level;
  Metrics recording_level;
  std::vector<Label> chunk_pred;        // aligned with the input chunk order
  std::vector<RecordingVote> votes;     // sorted by recording_ref
};

// Majority vote with ties toward HC.
Label majority_label(std::size_t pd_votes, std::size_t hc_votes);

// Eval-mode inference; argmax with ties toward HC; majority vote per
// recording, ties toward HC.
EvalOutcome evaluate(PdNet& net, const std::vector<SpeechChunk>& chunks);

}  // namespace pdspeech
