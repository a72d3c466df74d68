#pragma once

#include <string>
#include <vector>

#include "scnet/rng.hpp"
#include "scnet/tensor.hpp"

namespace scnet {

// Learned tensor with a stable name for checkpointing and optimizer state.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Non-learned state that still has to round-trip through checkpoints
// (batch-norm running statistics).
struct NamedBuffer {
  std::string name;
  std::vector<double>* data;
};

// All weights ~ N(0, sigma^2), biases zero. Norm gains are initialized to 1
// (a zero-mean gain would zero the forward signal); see init notes in the
// training module.
struct InitSpec {
  double sigma = 0.02;
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, const InitSpec& init, Rng& rng);

  Tensor forward(const Tensor& x) const { return add_bias(matmul(x, w), b); }
  std::size_t in_dim() const { return w.rows(); }
  std::size_t out_dim() const { return w.cols(); }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct BatchNorm1d {
  Tensor gamma;  // init 1
  Tensor beta;   // init 0
  BatchNormState state;
  double momentum = 0.1;
  double eps = 1e-5;
  // Batch statistics of the last training-mode forward; folded into the
  // running state either inline (serial use) or by the trainer after a
  // parallel batch, always in item order.
  std::vector<double> last_mean, last_var;

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t d);

  // In training mode the running state is NOT updated here; call
  // fold_running() (or have the trainer fold the saved statistics).
  Tensor forward(const Tensor& x, bool training);
  void fold_running() { fold_running(last_mean, last_var); }
  void fold_running(const std::vector<double>& mean, const std::vector<double>& var);

  void collect(const std::string& prefix, std::vector<NamedParam>& params,
               std::vector<NamedBuffer>& buffers);
};

struct LayerNorm {
  Tensor gain;  // init 1
  Tensor bias;  // init 0
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Linear -> BatchNorm -> ReLU applied per point row; the building block of
// the encoder/decoder pipelines. ReLU and BN can be disabled for output
// layers.
struct PointwiseLayer {
  Linear lin;
  BatchNorm1d bn;
  bool use_bn = true;
  bool use_relu = true;

  PointwiseLayer() = default;
  PointwiseLayer(std::size_t in, std::size_t out, bool use_bn, bool use_relu,
                 const InitSpec& init, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, std::vector<NamedParam>& params,
               std::vector<NamedBuffer>& buffers);
};

// Copies values between equally-structured parameter lists (same order and
// shapes), used for cloning models for batch-parallel workers.
void copy_values(const std::vector<NamedParam>& from, std::vector<NamedParam>& to);

}  // namespace scnet
