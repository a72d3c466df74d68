#include "scnet/nn.hpp"

#include <stdexcept>

namespace scnet {

Linear::Linear(std::size_t in, std::size_t out, const InitSpec& init, Rng& rng) {
  std::vector<double> wv(in * out);
  for (double& v : wv) v = rng.normal(0.0, init.sigma);
  w = Tensor::from_values({in, out}, std::move(wv), true);
  b = Tensor::zeros({out}, true);
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

BatchNorm1d::BatchNorm1d(std::size_t d) : state(d) {
  gamma = Tensor::full({d}, 1.0, true);
  beta = Tensor::zeros({d}, true);
}

Tensor BatchNorm1d::forward(const Tensor& x, bool training) {
  return batch_norm(x, gamma, beta, state, training, /*update_running=*/false, momentum, eps,
                    training ? &last_mean : nullptr, training ? &last_var : nullptr);
}

void BatchNorm1d::fold_running(const std::vector<double>& mean, const std::vector<double>& var) {
  if (mean.size() != state.running_mean.size())
    throw std::runtime_error("batch_norm: fold with mismatched statistics");
  for (std::size_t j = 0; j < mean.size(); ++j) {
    state.running_mean[j] = (1.0 - momentum) * state.running_mean[j] + momentum * mean[j];
    state.running_var[j] = (1.0 - momentum) * state.running_var[j] + momentum * var[j];
  }
}

void BatchNorm1d::collect(const std::string& prefix, std::vector<NamedParam>& params,
                          std::vector<NamedBuffer>& buffers) {
  params.push_back({prefix + ".gamma", gamma});
  params.push_back({prefix + ".beta", beta});
  buffers.push_back({prefix + ".running_mean", &state.running_mean});
  buffers.push_back({prefix + ".running_var", &state.running_var});
}

LayerNorm::LayerNorm(std::size_t d) {
  gain = Tensor::full({d}, 1.0, true);
  bias = Tensor::zeros({d}, true);
}

void LayerNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

PointwiseLayer::PointwiseLayer(std::size_t in, std::size_t out, bool use_bn_, bool use_relu_,
                               const InitSpec& init, Rng& rng)
    : lin(in, out, init, rng), use_bn(use_bn_), use_relu(use_relu_) {
  if (use_bn) bn = BatchNorm1d(out);
}

Tensor PointwiseLayer::forward(const Tensor& x, bool training) {
  Tensor h = lin.forward(x);
  if (use_bn) h = bn.forward(h, training);
  if (use_relu) h = relu(h);
  return h;
}

void PointwiseLayer::collect(const std::string& prefix, std::vector<NamedParam>& params,
                             std::vector<NamedBuffer>& buffers) {
  lin.collect(prefix + ".lin", params);
  if (use_bn) bn.collect(prefix + ".bn", params, buffers);
}

void copy_values(const std::vector<NamedParam>& from, std::vector<NamedParam>& to) {
  if (from.size() != to.size())
    throw std::runtime_error("copy_values: parameter lists differ in length");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].tensor.shape() != to[i].tensor.shape())
      throw std::runtime_error("copy_values: shape mismatch for " + from[i].name);
    to[i].tensor.values() = from[i].tensor.values();
  }
}

}  // namespace scnet
