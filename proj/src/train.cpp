#include "pdspeech/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "pdspeech/rng.hpp"

namespace pdspeech {

namespace {

std::map<std::string, Label> subject_labels(const DatasetManifest& manifest) {
  std::map<std::string, Label> labels;
  for (const auto& e : manifest.entries) {
    auto it = labels.find(e.subject_id);
    if (it == labels.end()) {
      labels.emplace(e.subject_id, e.label);
    } else if (it->second != e.label) {
      raise(Err::MixedClasses, "subject " + e.subject_id + " carries both labels");
    }
  }
  return labels;
}

std::size_t test_count(double test_frac, std::size_t class_size) {
  auto n = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(class_size)));
  n = std::max<std::size_t>(n, 1);
  n = std::min(n, class_size - 1);
  return n;
}

ad::TensorPtr chunk_tensor(const SpeechChunk& c) {
  return ad::make_tensor({1, c.samples.size()}, c.samples);
}

std::size_t class_index(Label l) { return l == Label::PD ? 1 : 0; }

struct Snapshot {
  std::vector<std::vector<double>> values;
  std::vector<double> bn1_mean, bn1_var, bn2_mean, bn2_var;
};

Snapshot take_snapshot(PdNet& net) {
  Snapshot s;
  for (const auto& p : net.trainable()) s.values.push_back(p->v);
  s.bn1_mean = net.bn1.running_mean;
  s.bn1_var = net.bn1.running_var;
  s.bn2_mean = net.bn2.running_mean;
  s.bn2_var = net.bn2.running_var;
  return s;
}

void restore_snapshot(PdNet& net, const Snapshot& s) {
  auto params = net.trainable();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->v = s.values[i];
  net.bn1.running_mean = s.bn1_mean;
  net.bn1.running_var = s.bn1_var;
  net.bn2.running_mean = s.bn2_mean;
  net.bn2.running_var = s.bn2_var;
}

double eval_loss(PdNet& net, const std::vector<ad::TensorPtr>& inputs,
                 const std::vector<std::size_t>& targets,
                 const std::vector<std::size_t>& indices) {
  constexpr std::size_t kEvalBatch = 32;
  double total = 0.0;
  for (std::size_t at = 0; at < indices.size(); at += kEvalBatch) {
    const std::size_t stop = std::min(at + kEvalBatch, indices.size());
    std::vector<ad::TensorPtr> batch;
    for (std::size_t i = at; i < stop; ++i) batch.push_back(inputs[indices[i]]);
    ad::Tape tape;
    auto fwd = net_forward(tape, net, batch, ad::BnMode::Eval);
    for (std::size_t i = at; i < stop; ++i) {
      total += tape.softmax_xent(fwd.logits[i - at], targets[indices[i]]).loss->v[0];
    }
  }
  return total / static_cast<double>(indices.size());
}

}  // namespace

std::vector<SplitPlan> make_splits(const DatasetManifest& manifest, std::size_t iterations,
                                   double test_frac, std::uint64_t seed) {
  if (iterations == 0) raise(Err::InvalidConfig, "need at least one holdout iteration");
  if (test_frac <= 0.0 || test_frac >= 1.0) {
    raise(Err::InvalidConfig, "test fraction must be in (0,1)");
  }
  const auto labels = subject_labels(manifest);
  std::vector<std::string> hc, pd;
  for (const auto& [subject, label] : labels) {
    (label == Label::PD ? pd : hc).push_back(subject);
  }
  if (hc.size() < 2 || pd.size() < 2) {
    raise(Err::TooFewSubjects, "need at least two subjects per class for disjoint splits");
  }

  Rng rng(seed);
  std::vector<SplitPlan> plans;
  for (std::size_t it = 1; it <= iterations; ++it) {
    auto hc_pool = hc;
    auto pd_pool = pd;
    rng.shuffle(hc_pool);
    rng.shuffle(pd_pool);
    const std::size_t hc_test = test_count(test_frac, hc_pool.size());
    const std::size_t pd_test = test_count(test_frac, pd_pool.size());
    SplitPlan plan;
    plan.iteration = it;
    plan.seed = seed;
    plan.test_subjects.assign(hc_pool.begin(), hc_pool.begin() + hc_test);
    plan.test_subjects.insert(plan.test_subjects.end(), pd_pool.begin(),
                              pd_pool.begin() + pd_test);
    plan.train_subjects.assign(hc_pool.begin() + hc_test, hc_pool.end());
    plan.train_subjects.insert(plan.train_subjects.end(), pd_pool.begin() + pd_test,
                               pd_pool.end());
    std::sort(plan.test_subjects.begin(), plan.test_subjects.end());
    std::sort(plan.train_subjects.begin(), plan.train_subjects.end());
    plans.push_back(std::move(plan));
  }
  return plans;
}

bool subjects_disjoint(const SplitPlan& plan) {
  std::set<std::string> train(plan.train_subjects.begin(), plan.train_subjects.end());
  for (const auto& s : plan.test_subjects) {
    if (train.count(s)) return false;
  }
  return true;
}

bool audit_no_leakage(const SplitPlan& plan, const std::vector<SpeechChunk>& chunks) {
  if (!subjects_disjoint(plan)) return false;
  std::set<std::string> train(plan.train_subjects.begin(), plan.train_subjects.end());
  std::set<std::string> test(plan.test_subjects.begin(), plan.test_subjects.end());
  for (const auto& c : chunks) {
    if (train.count(c.subject_id) && test.count(c.subject_id)) return false;
  }
  return true;
}

void Adam::step(const std::vector<ad::TensorPtr>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.v.size(); ++j) {
      const double g = p.g[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.v[j] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

TrainResult train(PdNet& net, const std::vector<SpeechChunk>& chunks, const Hyper& hp) {
  if (chunks.empty()) raise(Err::EmptyTrainingSet, "no training chunks");
  if (hp.batch_size == 0) raise(Err::InvalidConfig, "batch size must be positive");
  if (hp.val_frac < 0.0 || hp.val_frac >= 1.0) {
    raise(Err::InvalidConfig, "validation fraction must be in [0,1)");
  }
  std::vector<ad::TensorPtr> inputs;
  std::vector<std::size_t> targets;
  for (const auto& c : chunks) {
    if (c.samples.size() != net.chunk_len) {
      raise(Err::ShapeMismatch, "chunk length does not match the net input length");
    }
    inputs.push_back(chunk_tensor(c));
    targets.push_back(class_index(c.label));
  }

  const std::size_t n = chunks.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(hp.seed);
  rng.shuffle(order);
  std::size_t val_n = static_cast<std::size_t>(std::llround(hp.val_frac * static_cast<double>(n)));
  val_n = std::min(val_n, n - 1);
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + val_n);
  const std::vector<std::size_t> train_idx(order.begin() + val_n, order.end());

  auto params = net.trainable();
  Adam opt(hp.lr);
  TrainResult res;
  Snapshot best = take_snapshot(net);
  double best_val = HUGE_VAL;
  std::size_t since_best = 0;

  // fresh batch composition every epoch; fixed batches let the net lean on
  // per-batch normalization statistics that eval mode cannot reproduce
  std::vector<std::size_t> epoch_idx = train_idx;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    rng.shuffle(epoch_idx);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t at = 0; at < epoch_idx.size(); at += hp.batch_size) {
      const std::size_t stop = std::min(at + hp.batch_size, epoch_idx.size());
      batches.emplace_back(epoch_idx.begin() + at, epoch_idx.begin() + stop);
    }
    double epoch_total = 0.0;
    for (const auto& batch_idx : batches) {
      std::vector<ad::TensorPtr> batch;
      for (std::size_t i : batch_idx) batch.push_back(inputs[i]);
      for (const auto& p : params) p->zero_grad();
      ad::Tape tape;
      auto fwd = net_forward(tape, net, batch, ad::BnMode::Train);
      std::vector<ad::TensorPtr> losses;
      for (std::size_t i = 0; i < batch_idx.size(); ++i) {
        losses.push_back(tape.softmax_xent(fwd.logits[i], targets[batch_idx[i]]).loss);
      }
      auto loss = tape.mean_of(losses);
      if (!std::isfinite(loss->v[0])) {
        raise(Err::DivergenceDetected, "training loss is not finite");
      }
      tape.backward_scalar(loss);
      opt.step(params);
      epoch_total += loss->v[0];
    }
    const double epoch_mean = epoch_total / static_cast<double>(batches.size());
    res.epoch_loss.push_back(epoch_mean);

    const double val =
        val_idx.empty() ? epoch_mean : eval_loss(net, inputs, targets, val_idx);
    if (!std::isfinite(val)) raise(Err::DivergenceDetected, "validation loss is not finite");
    res.val_loss.push_back(val);
    res.epochs_run = epoch + 1;

    if (val < best_val) {
      best_val = val;
      best = take_snapshot(net);
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hp.early_stop_patience) {
      break;
    }
  }
  if (!res.epoch_loss.empty()) restore_snapshot(net, best);
  return res;
}

Label majority_label(std::size_t pd_votes, std::size_t hc_votes) {
  return pd_votes > hc_votes ? Label::PD : Label::HC;
}

EvalOutcome evaluate(PdNet& net, const std::vector<SpeechChunk>& chunks) {
  if (chunks.empty()) raise(Err::EmptyTestSet, "no test chunks");
  constexpr std::size_t kEvalBatch = 32;
  EvalOutcome out;
  out.chunk_pred.resize(chunks.size());
  for (std::size_t at = 0; at < chunks.size(); at += kEvalBatch) {
    const std::size_t stop = std::min(at + kEvalBatch, chunks.size());
    std::vector<ad::TensorPtr> batch;
    for (std::size_t i = at; i < stop; ++i) {
      if (chunks[i].samples.size() != net.chunk_len) {
        raise(Err::ShapeMismatch, "chunk length does not match the net input length");
      }
      batch.push_back(chunk_tensor(chunks[i]));
    }
    ad::Tape tape;
    auto fwd = net_forward(tape, net, batch, ad::BnMode::Eval);
    for (std::size_t i = at; i < stop; ++i) {
      const auto& l = fwd.logits[i - at]->v;
      out.chunk_pred[i] = l[1] > l[0] ? Label::PD : Label::HC;  // tie goes to HC
    }
  }

  std::vector<Label> truth;
  for (const auto& c : chunks) truth.push_back(c.label);
  out.chunk_level = compute_metrics(out.chunk_pred, truth);

  std::map<std::string, RecordingVote> votes;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    auto& v = votes[chunks[i].recording_ref];
    v.recording_ref = chunks[i].recording_ref;
    v.actual = chunks[i].label;
    if (out.chunk_pred[i] == Label::PD) ++v.pd_votes;
    else ++v.hc_votes;
  }
  std::vector<Label> rec_pred, rec_truth;
  for (auto& [ref, v] : votes) {
    v.predicted = majority_label(v.pd_votes, v.hc_votes);
    rec_pred.push_back(v.predicted);
    rec_truth.push_back(v.actual);
    out.votes.push_back(v);
  }
  out.recording_level = compute_metrics(rec_pred, rec_truth);
  return out;
}

}  // namespace pdspeech
