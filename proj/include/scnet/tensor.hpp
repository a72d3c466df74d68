#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace scnet {

class Rng;
struct TensorNode;

// Dense double tensor participating in a reverse-mode differentiation graph.
// Copies are shallow: they share the underlying node, so an op's output keeps
// its inputs alive through the parent links. A graph is built by calling ops
// and differentiated once with backward(); it is not thread-safe to build or
// differentiate one graph from several threads, but independent graphs may
// run in parallel.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t numel() const;
  std::size_t rank() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;
  bool requires_grad() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  // Populated by backward() on every requires_grad node of the graph.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  double at(std::size_t r, std::size_t c) const;
  double item() const;  // scalar tensors

  // Copy of the values, detached from any graph.
  Tensor detach() const;

  TensorNode* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;

  friend Tensor make_op(std::vector<std::size_t>, std::vector<double>, std::vector<Tensor>,
                        std::function<void(TensorNode&)>);
};

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on demand during backward
  bool requires_grad = false;
  std::vector<Tensor> parents;
  // Reads this node's grad/value and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backward;
};

// Extension point for ops with hand-written gradients (used by the metric
// losses). `backward` may be empty for constant results.
Tensor make_op(std::vector<std::size_t> shape, std::vector<double> value,
               std::vector<Tensor> parents, std::function<void(TensorNode&)> backward);

// Accumulation order for reductions that run over the point dimension.
// `sorted` adds the terms in ascending value order, which makes the result a
// function of the multiset of terms only: reductions over points then give
// bit-identical results under any permutation of the points.
enum class Accum { sequential, sorted };

// Sum of the buffer in ascending value order (buffer is reordered).
double sum_sorted(std::vector<double>& terms);

Tensor matmul(const Tensor& a, const Tensor& b, Accum accum = Accum::sequential);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // [n,d] + [d]
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

// Row-wise softmax, stabilized by row-max subtraction. Denominators are
// accumulated in sorted order; see Accum.
Tensor softmax_rows(const Tensor& x);

// Per-row standardization followed by the affine (gain, bias), both [d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

struct BatchNormState {
  std::vector<double> running_mean;  // init 0
  std::vector<double> running_var;   // init 1
  explicit BatchNormState(std::size_t d = 0)
      : running_mean(d, 0.0), running_var(d, 1.0) {}
};

// Per-feature standardization over the rows (the points). Training mode uses
// batch statistics (sorted accumulation); eval mode uses the running ones.
// When `update_running` is set the state is folded with `momentum`. Callers
// that need batch statistics (to fold running state externally, e.g. after a
// parallel batch) receive them through the optional out parameters.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, bool update_running,
                  double momentum = 0.1, double eps = 1e-5,
                  std::vector<double>* out_batch_mean = nullptr,
                  std::vector<double>* out_batch_var = nullptr);

// Inverted-scaling dropout: train mode keeps each element with probability
// 1-rate and scales by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor repeat_row(const Tensor& v, std::size_t n);  // [d] -> [n,d]

// Column-wise max over the rows. The gradient routes to the argmax row of
// each column; ties go to the lowest row index.
Tensor max_over_points(const Tensor& x);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// The same affine stack applied independently to every row; ReLU between
// layers when `relu_between` (never after the last layer).
Tensor pointwise_mlp(const Tensor& x, const std::vector<Tensor>& weights,
                     const std::vector<Tensor>& biases, bool relu_between = true);

// Reverse pass from a scalar loss. Zeroes the grads of the reachable
// requires_grad subgraph first, so repeated calls do not accumulate.
void backward(const Tensor& loss);

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace scnet
