#include "dastack/nn.hpp"

#include <cmath>
#include <string>

#include "dastack/errors.hpp"

namespace dastack {

void validate(const Mlp& net) {
  if (net.layers.empty()) throw InvalidParameterError("Mlp: no layers");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Dense& d = net.layers[l];
    if (d.weights.rows() == 0 || d.weights.cols() == 0)
      throw ShapeError("Mlp: layer " + std::to_string(l) + " has empty weights");
    if (d.bias.size() != d.weights.cols())
      throw ShapeError("Mlp: layer " + std::to_string(l) + " bias size mismatch");
    if (l > 0 && net.layers[l - 1].weights.cols() != d.weights.rows())
      throw ShapeError("Mlp: layer " + std::to_string(l) + " input dim mismatch");
  }
  if (net.layers.back().activation != Activation::None)
    throw InvalidParameterError("Mlp: last layer must have activation None");
}

void validate(const SgdConfig& cfg) {
  if (!(cfg.eta0 > 0.0)) throw InvalidParameterError("SgdConfig: eta0 must be > 0");
  if (!(cfg.alpha >= 0.0)) throw InvalidParameterError("SgdConfig: alpha must be >= 0");
  if (!(cfg.beta >= 0.0)) throw InvalidParameterError("SgdConfig: beta must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw InvalidParameterError("SgdConfig: momentum must be in [0, 1)");
  if (cfg.batch_size == 0) throw InvalidParameterError("SgdConfig: batch_size must be >= 1");
  if (cfg.epochs == 0) throw InvalidParameterError("SgdConfig: epochs must be >= 1");
}

Matrix forward(const Mlp& net, const Matrix& x, ForwardCache* cache) {
  validate(net);
  if (x.cols() != net.input_dim())
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " features, net expects " +
                     std::to_string(net.input_dim()));
  if (cache != nullptr) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Matrix cur = x;
  for (const Dense& d : net.layers) {
    Matrix pre = matmul(cur, d.weights);
    for (std::size_t i = 0; i < pre.rows(); ++i) {
      double* r = pre.row(i).data();
      for (std::size_t j = 0; j < pre.cols(); ++j) r[j] += d.bias[j];
    }
    Matrix post = pre;
    if (d.activation == Activation::Relu)
      for (double& v : post.values())
        if (v < 0.0) v = 0.0;
    if (cache != nullptr) {
      cache->pre.push_back(pre);
      cache->post.push_back(post);
    }
    cur = std::move(post);
  }
  return cur;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    double mx = r[0];
    for (double v : r) mx = std::max(mx, v);
    double sum = 0.0;
    auto pr = p.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      pr[j] = std::exp(r[j] - mx);
      sum += pr[j];
    }
    for (std::size_t j = 0; j < r.size(); ++j) pr[j] /= sum;
  }
  return p;
}

XentResult softmax_xent(const Matrix& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.rows())
    throw ShapeError("softmax_xent: label count does not match rows");
  if (logits.rows() == 0) throw DegenerateInputError("softmax_xent: empty batch");
  const std::size_t n = logits.rows();
  const int c = static_cast<int>(logits.cols());
  XentResult out;
  out.grad_logits = Matrix(n, logits.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= c)
      throw InvalidParameterError("softmax_xent: label " + std::to_string(y) + " out of range");
    auto r = logits.row(i);
    double mx = r[0];
    for (double v : r) mx = std::max(mx, v);
    double sum = 0.0;
    auto g = out.grad_logits.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      g[j] = std::exp(r[j] - mx);
      sum += g[j];
    }
    total += std::log(sum) - (r[y] - mx);
    const double inv = 1.0 / (sum * static_cast<double>(n));
    for (std::size_t j = 0; j < r.size(); ++j) g[j] *= inv;
    g[y] -= 1.0 / static_cast<double>(n);
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

MlpGrads zero_grads(const Mlp& net) {
  MlpGrads g;
  g.weights.reserve(net.layers.size());
  g.bias.reserve(net.layers.size());
  for (const Dense& d : net.layers) {
    g.weights.emplace_back(d.weights.rows(), d.weights.cols());
    g.bias.emplace_back(d.bias.size(), 0.0);
  }
  return g;
}

void add_grads(MlpGrads& dst, const MlpGrads& src) {
  if (dst.weights.size() != src.weights.size()) throw ShapeError("add_grads: layer count");
  for (std::size_t l = 0; l < dst.weights.size(); ++l) {
    dst.weights[l] += src.weights[l];
    for (std::size_t j = 0; j < dst.bias[l].size(); ++j) dst.bias[l][j] += src.bias[l][j];
  }
}

Matrix backward_into(const Mlp& net, const ForwardCache& cache, Matrix grad_output,
                     MlpGrads& acc) {
  const std::size_t nl = net.layers.size();
  if (cache.pre.size() != nl || cache.post.size() != nl)
    throw InvalidParameterError("backward: cache does not match network");
  if (acc.weights.size() != nl) throw ShapeError("backward: grad accumulator mismatch");
  if (!grad_output.same_shape(cache.post.back()))
    throw ShapeError("backward: grad_output shape mismatch");

  Matrix grad = std::move(grad_output);
  for (std::size_t li = nl; li-- > 0;) {
    const Dense& d = net.layers[li];
    if (d.activation == Activation::Relu) {
      const Matrix& pre = cache.pre[li];
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (pre.values()[i] <= 0.0) grad.values()[i] = 0.0;
    }
    const Matrix& below = li == 0 ? cache.input : cache.post[li - 1];
    // dW = below^T * grad, accumulated without forming the transpose.
    Matrix& dw = acc.weights[li];
    for (std::size_t i = 0; i < below.rows(); ++i) {
      const double* bi = below.row(i).data();
      const double* gi = grad.row(i).data();
      for (std::size_t r = 0; r < dw.rows(); ++r) {
        const double b = bi[r];
        if (b == 0.0) continue;
        double* dwr = dw.row(r).data();
        for (std::size_t cjj = 0; cjj < dw.cols(); ++cjj) dwr[cjj] += b * gi[cjj];
      }
    }
    std::vector<double>& db = acc.bias[li];
    for (std::size_t i = 0; i < grad.rows(); ++i) {
      const double* gi = grad.row(i).data();
      for (std::size_t j = 0; j < db.size(); ++j) db[j] += gi[j];
    }
    // grad wrt the layer input = grad * W^T
    Matrix next(grad.rows(), d.weights.rows());
    for (std::size_t i = 0; i < grad.rows(); ++i) {
      const double* gi = grad.row(i).data();
      double* ni = next.row(i).data();
      for (std::size_t j = 0; j < d.weights.cols(); ++j) {
        const double g = gi[j];
        if (g == 0.0) continue;
        for (std::size_t r = 0; r < d.weights.rows(); ++r) ni[r] += g * d.weights(r, j);
      }
    }
    grad = std::move(next);
  }
  return grad;
}

BackwardResult backward(const Mlp& net, const ForwardCache& cache, const Matrix& grad_output) {
  BackwardResult out;
  out.grads = zero_grads(net);
  out.grad_input = backward_into(net, cache, grad_output, out.grads);
  return out;
}

double lr_at(const SgdConfig& cfg, double progress) {
  validate(cfg);
  if (!(progress >= 0.0 && progress <= 1.0))
    throw InvalidParameterError("lr_at: progress must be in [0, 1], got " +
                                std::to_string(progress));
  return cfg.eta0 / std::pow(1.0 + cfg.alpha * progress, cfg.beta);
}

void sgd_step(Mlp& net, const MlpGrads& grads, MlpGrads& velocity, double lr, double momentum) {
  if (grads.weights.size() != net.layers.size() || velocity.weights.size() != net.layers.size())
    throw ShapeError("sgd_step: gradient/velocity layer count mismatch");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Matrix& w = net.layers[l].weights;
    Matrix& v = velocity.weights[l];
    const Matrix& g = grads.weights[l];
    if (!v.same_shape(w) || !g.same_shape(w)) throw ShapeError("sgd_step: shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      v.values()[i] = momentum * v.values()[i] - lr * g.values()[i];
      w.values()[i] += v.values()[i];
    }
    std::vector<double>& b = net.layers[l].bias;
    std::vector<double>& vb = velocity.bias[l];
    const std::vector<double>& gb = grads.bias[l];
    for (std::size_t j = 0; j < b.size(); ++j) {
      vb[j] = momentum * vb[j] - lr * gb[j];
      b[j] += vb[j];
    }
  }
}

Mlp make_mlp(std::span<const std::size_t> dims, std::span<const Activation> acts, Rng& rng) {
  if (dims.size() < 2) throw InvalidParameterError("make_mlp: need at least input and output dims");
  if (acts.size() != dims.size() - 1)
    throw InvalidParameterError("make_mlp: one activation per layer required");
  Mlp net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Dense d;
    const std::size_t fan_in = dims[l];
    const std::size_t fan_out = dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    d.weights = Matrix(fan_in, fan_out);
    for (double& v : d.weights.values()) v = u(rng);
    d.bias.assign(fan_out, 0.0);
    d.activation = acts[l];
    net.layers.push_back(std::move(d));
  }
  validate(net);
  return net;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace dastack
