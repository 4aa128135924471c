#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dastack/matrix.hpp"
#include "dastack/rng.hpp"

namespace dastack {

enum class Activation { None, Relu };

/// Fully connected layer: out = act(x * weights + bias), weights in x out.
struct Dense {
  Matrix weights;
  std::vector<double> bias;
  Activation activation = Activation::None;
};

/// Feed-forward stack of Dense layers. The last layer's activation must be
/// None so the network emits logits (or plain features).
struct Mlp {
  std::vector<Dense> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weights.rows(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weights.cols(); }
};

void validate(const Mlp& net);

/// Defaults follow the training protocol this toolkit reproduces:
/// lr(p) = eta0 / (1 + alpha p)^beta over global progress p in [0,1],
/// heavy-ball momentum 0.9, minibatch 32, 30 epochs.
struct SgdConfig {
  double eta0 = 0.01;
  double alpha = 10.0;
  double beta = 0.75;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
};

void validate(const SgdConfig& cfg);

/// Values recorded on the forward pass that backward needs: the input plus
/// each layer's pre-activation and post-activation output.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
};

Matrix forward(const Mlp& net, const Matrix& x, ForwardCache* cache = nullptr);

Matrix softmax(const Matrix& logits);

struct XentResult {
  double loss = 0.0;
  Matrix grad_logits;  // (softmax - onehot) / n
};

/// Mean cross-entropy of row-wise softmax against integer labels, stabilized
/// by max subtraction. Labels must lie in [0, logits.cols()).
XentResult softmax_xent(const Matrix& logits, const std::vector<int>& labels);

/// Parameter gradients, same shapes as the Mlp they belong to. Also reused
/// as the momentum buffer.
struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> bias;
};

MlpGrads zero_grads(const Mlp& net);
void add_grads(MlpGrads& dst, const MlpGrads& src);

struct BackwardResult {
  MlpGrads grads;
  Matrix grad_input;
};

BackwardResult backward(const Mlp& net, const ForwardCache& cache, const Matrix& grad_output);

/// Accumulating form: parameter gradients are added into acc, the returned
/// matrix is the gradient with respect to the cached input.
Matrix backward_into(const Mlp& net, const ForwardCache& cache, Matrix grad_output,
                     MlpGrads& acc);

/// eta0 / (1 + alpha * progress)^beta; progress must be in [0, 1].
double lr_at(const SgdConfig& cfg, double progress);

/// Heavy-ball update: v <- momentum * v - lr * grad; param += v.
void sgd_step(Mlp& net, const MlpGrads& grads, MlpGrads& velocity, double lr, double momentum);

/// Layers sized dims[0] -> dims[1] -> ... -> dims.back() with the given
/// activations (acts.size() == dims.size() - 1, last must be None). Weights
/// drawn uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
Mlp make_mlp(std::span<const std::size_t> dims, std::span<const Activation> acts, Rng& rng);

/// Row-wise argmax with ties broken toward the lower index.
std::vector<int> argmax_rows(const Matrix& m);

}  // namespace dastack
