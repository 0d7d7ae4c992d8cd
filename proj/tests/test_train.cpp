#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "pdspeech/rng.hpp"
#include "pdspeech/train.hpp"

using namespace pdspeech;

namespace {

DatasetManifest subjects_manifest(std::size_t hc, std::size_t pd) {
  DatasetManifest m;
  for (std::size_t i = 0; i < hc; ++i) {
    ManifestEntry e;
    e.path = "hc" + std::to_string(i) + ".wav";
    e.subject_id = "hc" + std::to_string(i);
    e.label = Label::HC;
    m.entries.push_back(e);
  }
  for (std::size_t i = 0; i < pd; ++i) {
    ManifestEntry e;
    e.path = "pd" + std::to_string(i) + ".wav";
    e.subject_id = "pd" + std::to_string(i);
    e.label = Label::PD;
    m.entries.push_back(e);
  }
  return m;
}

SpeechChunk make_chunk(double level, Label label, const std::string& rec,
                       const std::string& subject, std::size_t len, Rng& rng) {
  SpeechChunk c;
  c.samples.resize(len);
  for (auto& s : c.samples) s = level + 0.05 * rng.uniform(-1.0, 1.0);
  c.start_s = 0.0;
  c.end_s = 0.1;
  c.recording_ref = rec;
  c.subject_id = subject;
  c.label = label;
  return c;
}

std::vector<SpeechChunk> separable_chunks(std::size_t per_class, std::size_t len,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SpeechChunk> chunks;
  for (std::size_t i = 0; i < per_class; ++i) {
    chunks.push_back(make_chunk(-0.5, Label::HC, "rec_hc" + std::to_string(i),
                                "subj_hc" + std::to_string(i), len, rng));
    chunks.push_back(make_chunk(0.5, Label::PD, "rec_pd" + std::to_string(i),
                                "subj_pd" + std::to_string(i), len, rng));
  }
  return chunks;
}

std::vector<double> flatten_params(PdNet& net) {
  std::vector<double> all;
  for (const auto& p : net.trainable()) all.insert(all.end(), p->v.begin(), p->v.end());
  return all;
}

}  // namespace

TEST_CASE("splits are stratified, disjoint, and cover all subjects") {
  auto m = subjects_manifest(6, 4);
  auto plans = make_splits(m, 9, 0.2, 123);
  REQUIRE(plans.size() == 9);
  for (const auto& p : plans) {
    CHECK(subjects_disjoint(p));
    CHECK(p.train_subjects.size() + p.test_subjects.size() == 10);
    std::size_t hc_test = 0, pd_test = 0;
    for (const auto& s : p.test_subjects) {
      if (s.rfind("hc", 0) == 0) ++hc_test;
      else ++pd_test;
    }
    CHECK(hc_test == 1);  // round(0.2 * 6) = 1
    CHECK(pd_test == 1);  // round(0.2 * 4) = 1
    std::set<std::string> all(p.train_subjects.begin(), p.train_subjects.end());
    all.insert(p.test_subjects.begin(), p.test_subjects.end());
    CHECK(all.size() == 10);
  }
}

TEST_CASE("splits are deterministic under the seed") {
  auto m = subjects_manifest(5, 5);
  auto a = make_splits(m, 9, 0.2, 7);
  auto b = make_splits(m, 9, 0.2, 7);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(a[i].train_subjects == b[i].train_subjects);
    CHECK(a[i].test_subjects == b[i].test_subjects);
  }
  auto c = make_splits(m, 9, 0.2, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < 9; ++i) {
    if (a[i].test_subjects != c[i].test_subjects) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("test fraction rounds to nearest with a floor of one subject") {
  auto m = subjects_manifest(10, 3);
  auto plans = make_splits(m, 3, 0.34, 5);
  for (const auto& p : plans) {
    std::size_t hc_test = 0, pd_test = 0;
    for (const auto& s : p.test_subjects) {
      if (s.rfind("hc", 0) == 0) ++hc_test;
      else ++pd_test;
    }
    CHECK(hc_test == 3);  // round(3.4)
    CHECK(pd_test == 1);  // round(1.02)
  }
}

TEST_CASE("too few subjects in a class is rejected") {
  auto m = subjects_manifest(5, 1);
  CHECK_THROWS_AS(make_splits(m, 9, 0.2, 1), PdError);
}

TEST_CASE("mixed labels for one subject are rejected") {
  auto m = subjects_manifest(2, 2);
  ManifestEntry e;
  e.path = "dup.wav";
  e.subject_id = "hc0";
  e.label = Label::PD;
  m.entries.push_back(e);
  CHECK_THROWS_AS(make_splits(m, 2, 0.2, 1), PdError);
}

TEST_CASE("leakage audit flags overlapping subjects") {
  SplitPlan p;
  p.train_subjects = {"a", "b"};
  p.test_subjects = {"c"};
  CHECK(subjects_disjoint(p));
  std::vector<SpeechChunk> chunks(1);
  chunks[0].subject_id = "a";
  CHECK(audit_no_leakage(p, chunks));
  p.test_subjects = {"a"};
  CHECK_FALSE(subjects_disjoint(p));
  CHECK_FALSE(audit_no_leakage(p, chunks));
}

TEST_CASE("training separates two constant levels within 20 epochs") {
  const std::size_t len = 16;
  auto chunks = separable_chunks(8, len, 42);
  auto net = init_net(len, 11);
  Hyper hp;
  hp.lr = 1e-2;
  hp.epochs = 20;
  hp.batch_size = 16;
  hp.early_stop_patience = 50;
  hp.val_frac = 0.0;
  hp.seed = 3;
  auto res = train(net, chunks, hp);
  CHECK(res.epochs_run <= 20);
  auto out = evaluate(net, chunks);
  CHECK(out.chunk_level.accuracy == 1.0);
  CHECK(out.recording_level.accuracy == 1.0);
}

TEST_CASE("zero learning rate leaves parameters unchanged and the loss flat") {
  const std::size_t len = 12;
  auto chunks = separable_chunks(4, len, 9);
  auto net = init_net(len, 5);
  const auto before = flatten_params(net);
  Hyper hp;
  hp.lr = 0.0;
  hp.epochs = 5;
  hp.batch_size = 64;  // one full batch, so reshuffling cannot change its composition
  hp.early_stop_patience = 50;
  hp.val_frac = 0.0;
  auto res = train(net, chunks, hp);
  CHECK(flatten_params(net) == before);
  REQUIRE(res.epoch_loss.size() == 5);
  for (std::size_t e = 1; e < res.epoch_loss.size(); ++e) {
    // shuffling reorders the in-batch summation, so allow associativity noise
    CHECK(res.epoch_loss[e] == doctest::Approx(res.epoch_loss[0]).epsilon(1e-12));
  }
}

TEST_CASE("training is bitwise deterministic under fixed seeds") {
  const std::size_t len = 12;
  auto chunks = separable_chunks(4, len, 77);
  Hyper hp;
  hp.lr = 1e-3;
  hp.epochs = 4;
  hp.batch_size = 4;
  hp.val_frac = 0.25;
  hp.seed = 19;
  auto net1 = init_net(len, 100);
  auto net2 = init_net(len, 100);
  auto r1 = train(net1, chunks, hp);
  auto r2 = train(net2, chunks, hp);
  CHECK(flatten_params(net1) == flatten_params(net2));
  CHECK(net1.bn1.running_mean == net2.bn1.running_mean);
  CHECK(net1.bn2.running_var == net2.bn2.running_var);
  CHECK(r1.epoch_loss == r2.epoch_loss);
  CHECK(r1.val_loss == r2.val_loss);
  CHECK(r1.best_epoch == r2.best_epoch);
}

TEST_CASE("early stopping restores the best snapshot") {
  const std::size_t len = 12;
  auto chunks = separable_chunks(6, len, 31);
  auto net = init_net(len, 21);
  Hyper hp;
  hp.lr = 5e-3;
  hp.epochs = 40;
  hp.batch_size = 6;
  hp.early_stop_patience = 3;
  hp.val_frac = 0.25;
  hp.seed = 4;
  auto res = train(net, chunks, hp);
  REQUIRE(!res.val_loss.empty());
  const double best = *std::min_element(res.val_loss.begin(), res.val_loss.end());
  CHECK(res.val_loss[res.best_epoch] == best);
  if (res.epochs_run < hp.epochs) {
    // stopped early: no epoch after the best one improved within patience
    CHECK(res.epochs_run - res.best_epoch - 1 >= hp.early_stop_patience);
  }
}

TEST_CASE("train input validation") {
  auto net = init_net(8, 1);
  Hyper hp;
  CHECK_THROWS_AS(train(net, {}, hp), PdError);
  Rng rng(1);
  std::vector<SpeechChunk> wrong = {make_chunk(0.1, Label::HC, "r", "s", 9, rng)};
  CHECK_THROWS_AS(train(net, wrong, hp), PdError);
  hp.batch_size = 0;
  std::vector<SpeechChunk> ok = {make_chunk(0.1, Label::HC, "r", "s", 8, rng)};
  CHECK_THROWS_AS(train(net, ok, hp), PdError);
}

TEST_CASE("evaluate validation and tie conventions") {
  auto net = init_net(8, 1);
  CHECK_THROWS_AS(evaluate(net, {}), PdError);
  CHECK(majority_label(2, 1) == Label::PD);
  CHECK(majority_label(1, 2) == Label::HC);
  CHECK(majority_label(2, 2) == Label::HC);
  CHECK(majority_label(0, 0) == Label::HC);

  // an untouched net gives zero logits on zero input: chunk ties resolve to HC
  Rng rng(2);
  std::vector<SpeechChunk> zeros;
  auto c = make_chunk(0.0, Label::PD, "rec", "s", 8, rng);
  std::fill(c.samples.begin(), c.samples.end(), 0.0);
  zeros.push_back(c);
  auto out = evaluate(net, zeros);
  CHECK(out.chunk_pred[0] == Label::HC);
  CHECK(out.votes[0].predicted == Label::HC);
}

TEST_CASE("recording vote aggregates chunks of one recording") {
  const std::size_t len = 16;
  auto chunks = separable_chunks(6, len, 13);
  // give each recording several chunks
  std::vector<SpeechChunk> multi;
  Rng rng(55);
  for (const auto& c : chunks) {
    for (int k = 0; k < 3; ++k) {
      auto copy = c;
      for (auto& s : copy.samples) s += 0.02 * rng.uniform(-1.0, 1.0);
      multi.push_back(copy);
    }
  }
  auto net = init_net(len, 8);
  Hyper hp;
  hp.lr = 1e-2;
  hp.epochs = 20;
  hp.batch_size = 18;
  hp.early_stop_patience = 50;
  hp.val_frac = 0.0;
  train(net, multi, hp);
  auto out = evaluate(net, multi);
  CHECK(out.votes.size() == 12);  // 6 per class
  for (const auto& v : out.votes) CHECK(v.pd_votes + v.hc_votes == 3);
  CHECK(out.recording_level.accuracy == 1.0);
}
