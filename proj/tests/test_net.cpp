#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "pdspeech/net.hpp"
#include "pdspeech/rng.hpp"

using namespace pdspeech;
using namespace pdspeech::ad;

namespace {

std::vector<TensorPtr> random_batch(Rng& rng, std::size_t n, std::size_t len) {
  std::vector<TensorPtr> batch;
  for (std::size_t i = 0; i < n; ++i) {
    batch.push_back(make_tensor({1, len}, oracles::random_vec(rng, len)));
  }
  return batch;
}

bool near_kink(const NetForward& fwd, double margin) {
  for (const auto& list : {fwd.pre_relu1, fwd.pre_relu2}) {
    for (const auto& t : list) {
      for (double v : t->v) {
        if (std::fabs(v) < margin) return true;
      }
    }
  }
  return false;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("init determinism and shape") {
  auto a = init_net(16, 42);
  auto b = init_net(16, 42);
  CHECK(a.conv1.weight->v == b.conv1.weight->v);
  CHECK(a.conv2.weight->v == b.conv2.weight->v);
  CHECK(a.fc.weight->v == b.fc.weight->v);
  auto c = init_net(16, 43);
  CHECK(a.conv1.weight->v != c.conv1.weight->v);
  CHECK(a.fc.in == 96 * 16);
  CHECK(a.fc.out == 2);
  for (double v : a.conv1.bias->v) CHECK(v == 0.0);
  for (double v : a.bn1.gamma->v) CHECK(v == 1.0);
  CHECK_THROWS_AS(init_net(2, 1), PdError);
}

TEST_CASE("fc input dimension scales with chunk_len") {
  auto n = init_net(1024, 7);
  CHECK(n.fc.in == 98304);
}

TEST_CASE("forward shapes through both blocks") {
  Rng rng(5);
  for (std::size_t len : {3ul, 8ul, 17ul}) {
    auto net = init_net(len, 9);
    Tape t;
    auto batch = random_batch(rng, 2, len);
    auto fwd = net_forward(t, net, batch, BnMode::Train);
    REQUIRE(fwd.logits.size() == 2);
    CHECK(fwd.pre_relu1[0]->shape == std::vector<std::size_t>{48, len});
    CHECK(fwd.a_last[0]->shape == std::vector<std::size_t>{96, len});
    CHECK(fwd.logits[0]->shape == std::vector<std::size_t>{2});
  }
}

TEST_CASE("zero input on a fresh net gives zero logits in eval mode") {
  auto net = init_net(12, 3);
  Tape t;
  auto x = make_tensor({1, 12});
  auto fwd = net_forward(t, net, {x}, BnMode::Eval);
  CHECK(fwd.logits[0]->v[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fwd.logits[0]->v[1] == doctest::Approx(0.0).epsilon(1e-12));
  auto r = t.softmax_xent(fwd.logits[0], 0);
  CHECK(r.probs[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("eval mode forward is per-sample independent") {
  Rng rng(15);
  auto net = init_net(10, 21);
  // push running stats away from the initial values
  {
    Tape warm;
    net_forward(warm, net, random_batch(rng, 3, 10), BnMode::Train);
  }
  auto batch = random_batch(rng, 3, 10);
  Tape t1;
  auto f1 = net_forward(t1, net, batch, BnMode::Eval);
  std::vector<TensorPtr> swapped = {batch[2], batch[0], batch[1]};
  Tape t2;
  auto f2 = net_forward(t2, net, swapped, BnMode::Eval);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(f1.logits[0]->v[i] == f2.logits[1]->v[i]);
    CHECK(f1.logits[1]->v[i] == f2.logits[2]->v[i]);
    CHECK(f1.logits[2]->v[i] == f2.logits[0]->v[i]);
  }
}

TEST_CASE("wrong input length is rejected") {
  auto net = init_net(10, 2);
  Tape t;
  auto x = make_tensor({1, 11});
  CHECK_THROWS_AS(net_forward(t, net, {x}, BnMode::Eval), PdError);
}

TEST_CASE("parameter count formula") {
  CHECK(net_param_count(8) ==
        48 * 1 * 3 + 48 + 2 * 48 * 2 + 96 * 48 * 3 + 96 + 2 * 96 * 2 + 2 * 96 * 8 + 2);
  CHECK(net_param_count(1024) == 144 + 48 + 192 + 13824 + 96 + 384 + 196608 + 2);
}

TEST_CASE("save/load round trip is bitwise") {
  Rng rng(33);
  auto net = init_net(8, 77);
  {
    Tape warm;
    net_forward(warm, net, random_batch(rng, 2, 8), BnMode::Train);
  }
  TempFile f("pdnet_roundtrip.bin");
  save_net(net, f.path);

  // serialized size must match the parameter-count formula exactly
  const auto file_size = std::filesystem::file_size(f.path);
  CHECK(file_size == 4 + 4 + 8 + 8 + 8 + net_param_count(8) * 8 + 4);

  auto back = load_net(f.path);
  CHECK(back.chunk_len == 8);
  CHECK(back.init_seed == 77);
  CHECK(back.conv1.weight->v == net.conv1.weight->v);
  CHECK(back.bn1.running_mean == net.bn1.running_mean);
  CHECK(back.bn2.running_var == net.bn2.running_var);
  CHECK(back.fc.weight->v == net.fc.weight->v);

  auto batch = random_batch(rng, 2, 8);
  Tape ta, tb;
  auto fa = net_forward(ta, net, batch, BnMode::Eval);
  auto fb = net_forward(tb, back, batch, BnMode::Eval);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t i = 0; i < 2; ++i) CHECK(fa.logits[s]->v[i] == fb.logits[s]->v[i]);
  }
}

TEST_CASE("corrupt and mismatched model files are rejected") {
  auto net = init_net(8, 1);
  TempFile f("pdnet_corrupt.bin");
  save_net(net, f.path);

  {
    // truncated
    std::ifstream in(f.path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TempFile t("pdnet_trunc.bin");
    std::ofstream out(t.path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_net(t.path), PdError);
  }
  {
    // flipped payload byte breaks the checksum
    std::fstream io(f.path, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(64);
    char b;
    io.seekg(64);
    io.read(&b, 1);
    b = static_cast<char>(b ^ 0x5A);
    io.seekp(64);
    io.write(&b, 1);
    io.close();
    CHECK_THROWS_AS(load_net(f.path), PdError);
  }
  {
    // version 0
    TempFile t("pdnet_ver.bin");
    save_net(net, t.path);
    std::fstream io(t.path, std::ios::in | std::ios::out | std::ios::binary);
    const char zero[4] = {0, 0, 0, 0};
    io.seekp(4);
    io.write(zero, 4);
    io.close();
    try {
      load_net(t.path);
      CHECK(false);
    } catch (const PdError& e) {
      CHECK(e.code() == Err::VersionMismatch);
    }
  }
  CHECK_THROWS_AS(load_net("/nonexistent/model.bin"), PdError);
}

TEST_CASE("composed net gradients match finite differences") {
  Rng rng(911);
  const std::size_t len = 8;
  int done = 0;
  double worst = 0.0;
  while (done < 10) {
    auto net = init_net(len, rng.next());
    auto batch = random_batch(rng, 2, len);
    std::vector<std::size_t> targets = {rng.index(2), rng.index(2)};
    const bool train = done % 2 == 0;
    const auto mode = train ? BnMode::Train : BnMode::Eval;
    if (!train) {
      // converge running stats toward this batch's statistics so eval-mode
      // pre-ReLU values are spread like train-mode ones (kink filter below)
      for (int w = 0; w < 60; ++w) {
        Tape warm;
        net_forward(warm, net, batch, BnMode::Train);
      }
    }
    {
      Tape probe;
      auto fwd = net_forward(probe, net, batch, mode);
      if (near_kink(fwd, 1e-3)) continue;  // FD would straddle the ReLU kink
    }
    auto bn1_mean = net.bn1.running_mean;
    auto bn1_var = net.bn1.running_var;
    auto bn2_mean = net.bn2.running_mean;
    auto bn2_var = net.bn2.running_var;
    auto eval = [&]() {
      net.bn1.running_mean = bn1_mean;
      net.bn1.running_var = bn1_var;
      net.bn2.running_mean = bn2_mean;
      net.bn2.running_var = bn2_var;
      Tape t;
      auto fwd = net_forward(t, net, batch, mode);
      std::vector<TensorPtr> losses;
      for (std::size_t s = 0; s < batch.size(); ++s) {
        losses.push_back(t.softmax_xent(fwd.logits[s], targets[s]).loss);
      }
      return t.mean_of(losses)->v[0];
    };
    auto watched = net.trainable();
    for (const auto& b : batch) watched.push_back(b);
    for (const auto& w : watched) w->zero_grad();
    {
      net.bn1.running_mean = bn1_mean;
      net.bn1.running_var = bn1_var;
      net.bn2.running_mean = bn2_mean;
      net.bn2.running_var = bn2_var;
      Tape t;
      auto fwd = net_forward(t, net, batch, mode);
      std::vector<TensorPtr> losses;
      for (std::size_t s = 0; s < batch.size(); ++s) {
        losses.push_back(t.softmax_xent(fwd.logits[s], targets[s]).loss);
      }
      t.backward_scalar(t.mean_of(losses));
    }
    worst = std::max(worst, oracles::sampled_fd_rel(eval, watched, rng, 6));
    ++done;
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient at the last conv activations matches a head-only check") {
  Rng rng(411);
  const std::size_t len = 8;
  auto net = init_net(len, 5150);
  auto batch = random_batch(rng, 1, len);
  {
    Tape warm;
    net_forward(warm, net, batch, BnMode::Train);
  }
  Tape t;
  auto fwd = net_forward(t, net, batch, BnMode::Eval);
  const std::size_t cls = 1;
  std::vector<double> seed(2, 0.0);
  seed[cls] = 1.0;
  t.backward(fwd.logits[0], seed);

  // the head after a_last is flatten + affine, so dy_c/dA is directly the
  // matching row of the fc weight; check a sample of coordinates against a
  // fresh head-only evaluation under perturbation
  auto a = fwd.a_last[0];
  for (int s = 0; s < 50; ++s) {
    const std::size_t i = rng.index(a->size());
    auto head = [&]() {
      Tape h;
      auto leaf = make_tensor(a->shape, a->v);
      return h.affine(h.flatten(leaf), net.fc)->v[cls];
    };
    const double save = a->v[i];
    const double h1 = 1e-5;
    a->v[i] = save + h1;
    const double fp = head();
    a->v[i] = save - h1;
    const double fm = head();
    a->v[i] = save;
    CHECK(oracles::rel_err(a->g[i], (fp - fm) / (2 * h1)) < 1e-4);
  }
}

TEST_CASE("two backward calls double every gradient including activations") {
  Rng rng(123);
  auto net = init_net(8, 99);
  auto batch = random_batch(rng, 2, 8);
  Tape t;
  auto fwd = net_forward(t, net, batch, BnMode::Train);
  std::vector<TensorPtr> losses;
  for (std::size_t s = 0; s < 2; ++s) {
    losses.push_back(t.softmax_xent(fwd.logits[s], s % 2).loss);
  }
  auto loss = t.mean_of(losses);
  t.backward_scalar(loss);
  const auto gw = net.conv2.weight->g;
  const auto ga = fwd.a_last[0]->g;
  t.backward_scalar(loss);
  for (std::size_t i = 0; i < gw.size(); ++i) {
    CHECK(net.conv2.weight->g[i] == doctest::Approx(2.0 * gw[i]).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < ga.size(); ++i) {
    CHECK(fwd.a_last[0]->g[i] == doctest::Approx(2.0 * ga[i]).epsilon(1e-12));
  }
}
