#include "pdspeech/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <numeric>

namespace pdspeech::ad {

namespace {
std::atomic<std::uint64_t> g_tape_counter{1};

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

void check_finite(const Tensor& t, const char* op) {
#ifndef NDEBUG
  for (double x : t.v) {
    assert(std::isfinite(x) && "non-finite value produced by forward op");
    (void)x;
  }
#endif
  (void)t;
  (void)op;
}

TensorPtr make_tensor(std::vector<std::size_t> shape, double fill) {
  auto t = std::make_shared<Tensor>();
  const std::size_t n = shape_size(shape);
  t->shape = std::move(shape);
  t->v.assign(n, fill);
  t->g.assign(n, 0.0);
  return t;
}

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values) {
  const std::size_t n = shape_size(shape);
  if (values.size() != n) raise(Err::ShapeMismatch, "tensor values do not match shape");
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->v = std::move(values);
  t->g.assign(n, 0.0);
  return t;
}

ConvParams make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel) {
  if (kernel % 2 == 0 || kernel == 0) raise(Err::InvalidConfig, "conv kernel must be odd");
  ConvParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.kernel = kernel;
  p.padding = (kernel - 1) / 2;
  p.weight = make_tensor({out_channels, in_channels, kernel});
  p.bias = make_tensor({out_channels});
  return p;
}

BnParams make_batchnorm(std::size_t channels) {
  BnParams p;
  p.channels = channels;
  p.gamma = make_tensor({channels}, 1.0);
  p.beta = make_tensor({channels}, 0.0);
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  return p;
}

AffineParams make_affine(std::size_t in, std::size_t out) {
  AffineParams p;
  p.in = in;
  p.out = out;
  p.weight = make_tensor({out, in});
  p.bias = make_tensor({out});
  return p;
}

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

void Tape::track(const TensorPtr& t) {
  if (t->tape_mark != id_) {
    t->tape_mark = id_;
    t->delta.assign(t->size(), 0.0);
    touched_.push_back(t);
  }
}

TensorPtr Tape::conv1d(const TensorPtr& x, ConvParams& p) {
  if (x->shape.size() != 2 || x->dim(0) != p.in_channels) {
    raise(Err::ShapeMismatch, "conv1d expects (in_channels, time) input");
  }
  const std::size_t T = x->dim(1);
  if (T == 0) raise(Err::ShapeMismatch, "conv1d on empty time axis");
  const std::size_t C_in = p.in_channels, C_out = p.out_channels, K = p.kernel;
  const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(p.padding);

  auto y = make_tensor({C_out, T});
  const double* xv = x->v.data();
  const double* wv = p.weight->v.data();
  const double* bv = p.bias->v.data();
  double* yv = y->v.data();

  for (std::size_t o = 0; o < C_out; ++o) {
    double* yo = yv + o * T;
    std::fill(yo, yo + T, bv[o]);
    for (std::size_t i = 0; i < C_in; ++i) {
      const double* xi = xv + i * T;
      const double* wo = wv + (o * C_in + i) * K;
      for (std::size_t k = 0; k < K; ++k) {
        const double w = wo[k];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - P;
        const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t hi = shift > 0 ? T - static_cast<std::size_t>(shift) : T;
        for (std::size_t t = lo; t < hi; ++t) yo[t] += w * xi[t + static_cast<std::size_t>(shift)];
      }
    }
  }
  check_finite(*y, "conv1d");

  track(x);
  track(p.weight);
  track(p.bias);
  track(y);
  TensorPtr weight = p.weight, bias = p.bias;
  nodes_.push_back({[x, weight, bias, y, C_in, C_out, K, P, T]() {
    const double* dy = y->delta.data();
    const double* xv = x->v.data();
    const double* wv = weight->v.data();
    double* dx = x->delta.data();
    double* dw = weight->delta.data();
    double* db = bias->delta.data();
    for (std::size_t o = 0; o < C_out; ++o) {
      const double* dyo = dy + o * T;
      double acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += dyo[t];
      db[o] += acc;
      for (std::size_t i = 0; i < C_in; ++i) {
        const double* xi = xv + i * T;
        const double* wo = wv + (o * C_in + i) * K;
        double* dwo = dw + (o * C_in + i) * K;
        double* dxi = dx + i * T;
        for (std::size_t k = 0; k < K; ++k) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - P;
          const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t hi = shift > 0 ? T - static_cast<std::size_t>(shift) : T;
          const double w = wo[k];
          double wg = 0.0;
          for (std::size_t t = lo; t < hi; ++t) {
            const std::size_t s = t + static_cast<std::size_t>(shift);
            wg += dyo[t] * xi[s];
            dxi[s] += w * dyo[t];
          }
          dwo[k] += wg;
        }
      }
    }
  }});
  return y;
}

std::vector<TensorPtr> Tape::batchnorm(const std::vector<TensorPtr>& batch, BnParams& p) {
  if (batch.empty()) raise(Err::EmptyBatch, "batchnorm on empty batch");
  const std::size_t C = p.channels;
  const std::size_t T = batch.front()->dim(1);
  for (const auto& t : batch) {
    if (t->shape.size() != 2 || t->dim(0) != C || t->dim(1) != T) {
      raise(Err::ShapeMismatch, "batchnorm batch tensors must share (channels, time) shape");
    }
  }
  const std::size_t B = batch.size();
  const double N = static_cast<double>(B * T);

  std::vector<double> mean(C, 0.0), var(C, 0.0), inv_std(C, 0.0);
  if (p.mode == BnMode::Train) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (const auto& t : batch) {
        const double* x = t->v.data() + c * T;
        for (std::size_t i = 0; i < T; ++i) acc += x[i];
      }
      mean[c] = acc / N;
      double sq = 0.0;
      for (const auto& t : batch) {
        const double* x = t->v.data() + c * T;
        for (std::size_t i = 0; i < T; ++i) {
          const double d = x[i] - mean[c];
          sq += d * d;
        }
      }
      var[c] = sq / N;
      inv_std[c] = 1.0 / std::sqrt(var[c] + p.epsilon);
    }
    for (std::size_t c = 0; c < C; ++c) {
      p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean[c];
      p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * var[c];
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = p.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(p.running_var[c] + p.epsilon);
    }
  }

  std::vector<TensorPtr> out;
  std::vector<TensorPtr> xhat;  // saved for backward
  out.reserve(B);
  xhat.reserve(B);
  const double* gv = p.gamma->v.data();
  const double* bv = p.beta->v.data();
  for (const auto& t : batch) {
    auto y = make_tensor({C, T});
    auto h = make_tensor({C, T});
    for (std::size_t c = 0; c < C; ++c) {
      const double* x = t->v.data() + c * T;
      double* hv = h->v.data() + c * T;
      double* yv = y->v.data() + c * T;
      for (std::size_t i = 0; i < T; ++i) {
        hv[i] = (x[i] - mean[c]) * inv_std[c];
        yv[i] = gv[c] * hv[i] + bv[c];
      }
    }
    check_finite(*y, "batchnorm");
    out.push_back(std::move(y));
    xhat.push_back(std::move(h));
  }

  for (const auto& t : batch) track(t);
  track(p.gamma);
  track(p.beta);
  for (const auto& t : out) track(t);

  TensorPtr gamma = p.gamma, beta = p.beta;
  const bool train = p.mode == BnMode::Train;
  std::vector<TensorPtr> inputs = batch;
  std::vector<TensorPtr> outputs = out;
  nodes_.push_back({[inputs, outputs, xhat, gamma, beta, inv_std, C, T, N, train]() {
    const std::size_t B = inputs.size();
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* dy = outputs[b]->delta.data() + c * T;
        const double* h = xhat[b]->v.data() + c * T;
        for (std::size_t i = 0; i < T; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * h[i];
        }
      }
      gamma->delta[c] += sum_dy_xhat;
      beta->delta[c] += sum_dy;
      const double gcs = gamma->v[c] * inv_std[c];
      for (std::size_t b = 0; b < B; ++b) {
        const double* dy = outputs[b]->delta.data() + c * T;
        const double* h = xhat[b]->v.data() + c * T;
        double* dx = inputs[b]->delta.data() + c * T;
        if (train) {
          // full train-mode adjoint with the mean/variance coupling terms
          for (std::size_t i = 0; i < T; ++i) {
            dx[i] += gcs / N * (N * dy[i] - sum_dy - h[i] * sum_dy_xhat);
          }
        } else {
          for (std::size_t i = 0; i < T; ++i) dx[i] += gcs * dy[i];
        }
      }
    }
  }});
  return out;
}

TensorPtr Tape::relu(const TensorPtr& x) {
  auto y = make_tensor(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i) y->v[i] = x->v[i] > 0.0 ? x->v[i] : 0.0;
  check_finite(*y, "relu");

  track(x);
  track(y);
  nodes_.push_back({[x, y]() {
    for (std::size_t i = 0; i < x->size(); ++i) {
      if (x->v[i] > 0.0) x->delta[i] += y->delta[i];
    }
  }});
  return y;
}

TensorPtr Tape::flatten(const TensorPtr& x) {
  auto y = make_tensor({x->size()}, x->v);
  track(x);
  track(y);
  nodes_.push_back({[x, y]() {
    for (std::size_t i = 0; i < x->size(); ++i) x->delta[i] += y->delta[i];
  }});
  return y;
}

TensorPtr Tape::affine(const TensorPtr& x, AffineParams& p) {
  if (x->size() != p.in) raise(Err::ShapeMismatch, "affine input size mismatch");
  auto y = make_tensor({p.out});
  const double* xv = x->v.data();
  const double* wv = p.weight->v.data();
  for (std::size_t o = 0; o < p.out; ++o) {
    double acc = p.bias->v[o];
    const double* wo = wv + o * p.in;
    for (std::size_t i = 0; i < p.in; ++i) acc += wo[i] * xv[i];
    y->v[o] = acc;
  }
  check_finite(*y, "affine");

  track(x);
  track(p.weight);
  track(p.bias);
  track(y);
  TensorPtr weight = p.weight, bias = p.bias;
  const std::size_t in = p.in, out_n = p.out;
  nodes_.push_back({[x, weight, bias, y, in, out_n]() {
    const double* dy = y->delta.data();
    const double* xv = x->v.data();
    const double* wv = weight->v.data();
    double* dx = x->delta.data();
    double* dw = weight->delta.data();
    for (std::size_t o = 0; o < out_n; ++o) {
      const double d = dy[o];
      bias->delta[o] += d;
      const double* wo = wv + o * in;
      double* dwo = dw + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dwo[i] += d * xv[i];
        dx[i] += d * wo[i];
      }
    }
  }});
  return y;
}

XentResult Tape::softmax_xent(const TensorPtr& logits, std::size_t target) {
  const std::size_t n = logits->size();
  if (n == 0) raise(Err::ShapeMismatch, "softmax on empty logits");
  if (target >= n) raise(Err::InvalidClass, "target class out of range");

  const double m = *std::max_element(logits->v.begin(), logits->v.end());
  std::vector<double> e(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = std::exp(logits->v[i] - m);
    z += e[i];
  }
  XentResult res;
  res.probs.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.probs[i] = e[i] / z;
  res.loss = make_tensor({1});
  res.loss->v[0] = std::log(z) - (logits->v[target] - m);
  check_finite(*res.loss, "softmax_xent");

  track(logits);
  track(res.loss);
  TensorPtr loss = res.loss;
  std::vector<double> probs = res.probs;
  nodes_.push_back({[logits, loss, probs, target]() {
    const double d = loss->delta[0];
    for (std::size_t i = 0; i < probs.size(); ++i) {
      logits->delta[i] += d * (probs[i] - (i == target ? 1.0 : 0.0));
    }
  }});
  return res;
}

TensorPtr Tape::mean_of(const std::vector<TensorPtr>& scalars) {
  if (scalars.empty()) raise(Err::EmptyInput, "mean_of empty list");
  auto y = make_tensor({1});
  for (const auto& s : scalars) {
    if (s->size() != 1) raise(Err::ShapeMismatch, "mean_of expects scalar tensors");
    y->v[0] += s->v[0];
  }
  y->v[0] /= static_cast<double>(scalars.size());

  for (const auto& s : scalars) track(s);
  track(y);
  std::vector<TensorPtr> in = scalars;
  nodes_.push_back({[in, y]() {
    const double d = y->delta[0] / static_cast<double>(in.size());
    for (const auto& s : in) s->delta[0] += d;
  }});
  return y;
}

void Tape::backward(const TensorPtr& seed, std::span<const double> seed_grad) {
  if (in_backward_) raise(Err::TapeCorrupted, "reentrant backward");
  if (seed->tape_mark != id_) raise(Err::TapeCorrupted, "seed tensor is not on this tape");
  if (seed_grad.size() != seed->size()) {
    raise(Err::SeedShapeMismatch, "seed gradient shape does not match seed tensor");
  }
  in_backward_ = true;
  for (std::size_t i = 0; i < seed_grad.size(); ++i) seed->delta[i] += seed_grad[i];
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
  for (const auto& t : touched_) {
    for (std::size_t i = 0; i < t->size(); ++i) t->g[i] += t->delta[i];
    std::fill(t->delta.begin(), t->delta.end(), 0.0);
  }
  in_backward_ = false;
}

void Tape::backward_scalar(const TensorPtr& seed) {
  const double one = 1.0;
  backward(seed, std::span<const double>(&one, 1));
}

}  // namespace pdspeech::ad
