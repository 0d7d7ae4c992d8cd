#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "pdspeech/errors.hpp"

namespace pdspeech::ad {

// Dense double tensor with a same-shape gradient buffer. Shapes used here:
// (features), (channels, time) and (out_channels, in_channels, kernel).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;  // values
  std::vector<double> g;  // gradient, accumulated until explicitly zeroed

  // scratch used by Tape::backward; holds this sweep's contribution so that
  // repeated backward calls add exactly one sweep's worth each time
  std::vector<double> delta;
  std::uint64_t tape_mark = 0;

  std::size_t size() const { return v.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<std::size_t> shape, double fill = 0.0);
TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values);

struct ConvParams {
  TensorPtr weight;  // (out_channels, in_channels, kernel)
  TensorPtr bias;    // (out_channels)
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t padding = 0;  // (kernel - 1) / 2, so time length is preserved
};

// Kernel must be odd; stride is fixed at 1.
ConvParams make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

enum class BnMode { Train, Eval };

struct BnParams {
  TensorPtr gamma;  // (channels)
  TensorPtr beta;   // (channels)
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  BnMode mode = BnMode::Train;
  std::size_t channels = 0;
};

BnParams make_batchnorm(std::size_t channels);

struct AffineParams {
  TensorPtr weight;  // (out, in)
  TensorPtr bias;    // (out)
  std::size_t in = 0;
  std::size_t out = 0;
};

AffineParams make_affine(std::size_t in, std::size_t out);

struct XentResult {
  TensorPtr loss;             // shape (1)
  std::vector<double> probs;  // softmax of the logits, sums to 1
};

// Records operations as they execute; backward replays them in reverse
// creation order, which is a reverse topological order by construction.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // x: (C_in, T) -> (C_out, T), zero-padded cross-correlation.
  TensorPtr conv1d(const TensorPtr& x, ConvParams& p);

  // Train mode normalizes with per-channel batch statistics over
  // (batch x time) and updates the running stats; Eval mode uses the
  // running stats and is purely per-sample.
  std::vector<TensorPtr> batchnorm(const std::vector<TensorPtr>& batch, BnParams& p);

  TensorPtr relu(const TensorPtr& x);

  // (C, T) -> (C*T)
  TensorPtr flatten(const TensorPtr& x);

  // (in) -> (out), y = Wx + b
  TensorPtr affine(const TensorPtr& x, AffineParams& p);

  // Numerically stable softmax cross-entropy for one sample.
  XentResult softmax_xent(const TensorPtr& logits, std::size_t target);

  // Arithmetic mean of scalar tensors, used to combine per-sample losses.
  TensorPtr mean_of(const std::vector<TensorPtr>& scalars);

  // Reverse sweep seeded with seed_grad at seed. Gradients accumulate (+=)
  // into every reachable tensor's g; calling twice adds two sweeps' worth.
  void backward(const TensorPtr& seed, std::span<const double> seed_grad);
  void backward_scalar(const TensorPtr& seed);  // seed_grad = {1}

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  std::vector<TensorPtr> touched_;
  std::uint64_t id_;
  bool in_backward_ = false;

  void track(const TensorPtr& t);
};

// Debug-build guard: forward ops on finite input must produce finite output.
void check_finite(const Tensor& t, const char* op);

}  // namespace pdspeech::ad
