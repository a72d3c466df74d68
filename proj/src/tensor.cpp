#include "scnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "scnet/rng.hpp"

namespace scnet {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::shared_ptr<TensorNode> new_node(std::vector<std::size_t> shape, std::vector<double> value,
                                     bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

bool any_requires_grad(const std::vector<Tensor>& ts) {
  for (const Tensor& t : ts)
    if (t.requires_grad()) return true;
  return false;
}

std::vector<double>& grad_of(Tensor& t) { return t.node()->grad; }

void ensure_grad(TensorNode& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values,
                           bool requires_grad) {
  check(shape_numel(shape) == values.size(),
        "tensor: data length " + std::to_string(values.size()) + " does not match shape " +
            shape_str(shape));
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_node({1}, {value}, requires_grad));
}

const std::vector<std::size_t>& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::rank() const { return node_->shape.size(); }

std::size_t Tensor::rows() const {
  check(rank() == 2, "tensor: rows() on non-matrix " + shape_str(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  check(rank() == 2, "tensor: cols() on non-matrix " + shape_str(shape()));
  return node_->shape[1];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::vector<double>& Tensor::values() { return node_->value; }
const std::vector<double>& Tensor::values() const { return node_->value; }
std::vector<double>& Tensor::grad() { return node_->grad; }
const std::vector<double>& Tensor::grad() const { return node_->grad; }

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

double Tensor::item() const {
  check(numel() == 1, "tensor: item() on non-scalar " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return Tensor(new_node(node_->shape, node_->value, false));
}

Tensor make_op(std::vector<std::size_t> shape, std::vector<double> value,
               std::vector<Tensor> parents, std::function<void(TensorNode&)> backward) {
  check(shape_numel(shape) == value.size(), "make_op: value length does not match shape");
  auto n = new_node(std::move(shape), std::move(value), any_requires_grad(parents));
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Tensor(n);
}

double sum_sorted(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

Tensor matmul(const Tensor& a, const Tensor& b, Accum accum) {
  check(a.rank() == 2 && b.rank() == 2,
        "matmul: expects matrices, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  check(a.cols() == b.rows(),
        "matmul: inner extents disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  const std::vector<double>& av = a.values();
  const std::vector<double>& bv = b.values();
  std::vector<double> out(r * c, 0.0);
  if (accum == Accum::sequential) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t l = 0; l < k; ++l) {
        const double ail = av[i * k + l];
        if (ail == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += ail * bv[l * c + j];
      }
    }
  } else {
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t l = 0; l < k; ++l) terms[l] = av[i * k + l] * bv[l * c + j];
        out[i * c + j] = sum_sorted(terms);
      }
    }
  }
  return make_op({r, c}, std::move(out), {a, b}, [r, k, c](TensorNode& o) {
    Tensor pa = o.parents[0], pb = o.parents[1];
    const std::vector<double>& g = o.grad;
    if (pa.requires_grad()) {
      ensure_grad(*pa.node());
      std::vector<double>& ga = grad_of(pa);
      const std::vector<double>& bv = pb.values();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * bv[l * c + j];
          ga[i * k + l] += s;
        }
    }
    if (pb.requires_grad()) {
      ensure_grad(*pb.node());
      std::vector<double>& gb = grad_of(pb);
      const std::vector<double>& av = pa.values();
      for (std::size_t l = 0; l < k; ++l)
        for (std::size_t j = 0; j < c; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < r; ++i) s += av[i * k + l] * g[i * c + j];
          gb[l * c + j] += s;
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  check(a.rank() == 2, "transpose: expects a matrix, got " + shape_str(a.shape()));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const std::vector<double>& av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_op({c, r}, std::move(out), {a}, [r, c](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += o.grad[j * r + i];
  });
}

namespace {

Tensor elementwise_pair(const Tensor& a, const Tensor& b, const char* name,
                        double (*fwd)(double, double),
                        std::function<void(TensorNode&)> backward) {
  check(a.shape() == b.shape(), std::string(name) + ": shape mismatch: " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.values()[i], b.values()[i]);
  return make_op(a.shape(), std::move(out), {a, b}, std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_pair(a, b, "add", [](double x, double y) { return x + y; },
                          [](TensorNode& o) {
                            for (int s = 0; s < 2; ++s) {
                              Tensor p = o.parents[s];
                              if (!p.requires_grad()) continue;
                              ensure_grad(*p.node());
                              std::vector<double>& gp = grad_of(p);
                              for (std::size_t i = 0; i < o.grad.size(); ++i) gp[i] += o.grad[i];
                            }
                          });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_pair(a, b, "sub", [](double x, double y) { return x - y; },
                          [](TensorNode& o) {
                            for (int s = 0; s < 2; ++s) {
                              Tensor p = o.parents[s];
                              if (!p.requires_grad()) continue;
                              ensure_grad(*p.node());
                              std::vector<double>& gp = grad_of(p);
                              const double sign = s == 0 ? 1.0 : -1.0;
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                gp[i] += sign * o.grad[i];
                            }
                          });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_pair(a, b, "mul", [](double x, double y) { return x * y; },
                          [](TensorNode& o) {
                            Tensor pa = o.parents[0], pb = o.parents[1];
                            if (pa.requires_grad()) {
                              ensure_grad(*pa.node());
                              std::vector<double>& ga = grad_of(pa);
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                ga[i] += o.grad[i] * pb.values()[i];
                            }
                            if (pb.requires_grad()) {
                              ensure_grad(*pb.node());
                              std::vector<double>& gb = grad_of(pb);
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                gb[i] += o.grad[i] * pa.values()[i];
                            }
                          });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  return make_op(a.shape(), std::move(out), {a}, [c](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i) gp[i] += c * o.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  check(x.rank() == 2 && bias.rank() == 1, "add_bias: expects [n,d] and [d]");
  check(x.cols() == bias.numel(), "add_bias: width mismatch: " + shape_str(x.shape()) + " vs " +
                                      shape_str(bias.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.values()[i * d + j] + bias.values()[j];
  return make_op({n, d}, std::move(out), {x, bias}, [n, d](TensorNode& o) {
    Tensor px = o.parents[0], pb = o.parents[1];
    if (px.requires_grad()) {
      ensure_grad(*px.node());
      std::vector<double>& gx = grad_of(px);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
    if (pb.requires_grad()) {
      ensure_grad(*pb.node());
      std::vector<double>& gb = grad_of(pb);
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += o.grad[i * d + j];
        gb[j] += s;
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  return make_op(x.shape(), std::move(out), {x}, [](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (p.values()[i] > 0.0) gp[i] += o.grad[i];
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.values()[i]);
  return make_op(x.shape(), std::move(out), {x}, [](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double y = o.value[i];
      gp[i] += (1.0 - y * y) * o.grad[i];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  check(x.rank() == 2, "softmax_rows: expects a matrix, got " + shape_str(x.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  std::vector<double> terms(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.values().data() + i * d;
    double m = row[0];
    for (std::size_t j = 1; j < d; ++j) m = std::max(m, row[j]);
    if (std::isnan(m)) throw std::runtime_error("softmax_rows: NaN input in row " + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j) terms[j] = std::exp(row[j] - m);
    std::vector<double> e(terms);
    const double den = sum_sorted(terms);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = e[j] / den;
  }
  return make_op({n, d}, std::move(out), {x}, [n, d](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = o.value.data() + i * d;
      const double* g = o.grad.data() + i * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < d; ++j) gp[i * d + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check(x.rank() == 2, "layer_norm: expects [n,d]");
  const std::size_t n = x.rows(), d = x.cols();
  check(gain.numel() == d && bias.numel() == d, "layer_norm: gain/bias width mismatch");
  std::vector<double> out(n * d);
  std::vector<double> mean(n), inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.values().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    mean[i] = mu;
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = gain.values()[j] * (row[j] - mu) * is + bias.values()[j];
  }
  return make_op({n, d}, std::move(out), {x, gain, bias},
                 [n, d, mean, inv_std](TensorNode& o) {
                   Tensor px = o.parents[0], pg = o.parents[1], pb = o.parents[2];
                   const std::vector<double>& xv = px.values();
                   const std::vector<double>& gv = pg.values();
                   if (px.requires_grad()) {
                     ensure_grad(*px.node());
                     std::vector<double>& gx = grad_of(px);
                     for (std::size_t i = 0; i < n; ++i) {
                       const double* row = xv.data() + i * d;
                       const double* g = o.grad.data() + i * d;
                       const double mu = mean[i], is = inv_std[i];
                       double sum_dxhat = 0.0, sum_dxhat_c = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dxh = g[j] * gv[j];
                         sum_dxhat += dxh;
                         sum_dxhat_c += dxh * (row[j] - mu);
                       }
                       const double dn = static_cast<double>(d);
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dxh = g[j] * gv[j];
                         gx[i * d + j] += is * (dxh - sum_dxhat / dn -
                                                (row[j] - mu) * is * is * sum_dxhat_c / dn);
                       }
                     }
                   }
                   if (pg.requires_grad()) {
                     ensure_grad(*pg.node());
                     std::vector<double>& gg = grad_of(pg);
                     for (std::size_t j = 0; j < d; ++j) {
                       double s = 0.0;
                       for (std::size_t i = 0; i < n; ++i)
                         s += o.grad[i * d + j] * (xv[i * d + j] - mean[i]) * inv_std[i];
                       gg[j] += s;
                     }
                   }
                   if (pb.requires_grad()) {
                     ensure_grad(*pb.node());
                     std::vector<double>& gb = grad_of(pb);
                     for (std::size_t j = 0; j < d; ++j) {
                       double s = 0.0;
                       for (std::size_t i = 0; i < n; ++i) s += o.grad[i * d + j];
                       gb[j] += s;
                     }
                   }
                 });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training, bool update_running, double momentum, double eps,
                  std::vector<double>* out_batch_mean, std::vector<double>* out_batch_var) {
  check(x.rank() == 2, "batch_norm: expects [n,d]");
  const std::size_t n = x.rows(), d = x.cols();
  check(gamma.numel() == d && beta.numel() == d, "batch_norm: gamma/beta width mismatch");
  check(state.running_mean.size() == d && state.running_var.size() == d,
        "batch_norm: state width mismatch");

  std::vector<double> mean(d), var(d);
  if (training) {
    std::vector<double> terms(n);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < n; ++i) terms[i] = x.values()[i * d + j];
      mean[j] = sum_sorted(terms) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double c = x.values()[i * d + j] - mean[j];
        terms[i] = c * c;
      }
      var[j] = sum_sorted(terms) / static_cast<double>(n);
    }
    if (update_running) {
      for (std::size_t j = 0; j < d; ++j) {
        state.running_mean[j] = (1.0 - momentum) * state.running_mean[j] + momentum * mean[j];
        state.running_var[j] = (1.0 - momentum) * state.running_var[j] + momentum * var[j];
      }
    }
    if (out_batch_mean) *out_batch_mean = mean;
    if (out_batch_var) *out_batch_var = var;
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] =
          gamma.values()[j] * (x.values()[i * d + j] - mean[j]) * inv_std[j] + beta.values()[j];

  return make_op(
      {n, d}, std::move(out), {x, gamma, beta},
      [n, d, mean, inv_std, training](TensorNode& o) {
        Tensor px = o.parents[0], pg = o.parents[1], pb = o.parents[2];
        const std::vector<double>& xv = px.values();
        const std::vector<double>& gv = pg.values();
        if (px.requires_grad()) {
          ensure_grad(*px.node());
          std::vector<double>& gx = grad_of(px);
          const double dn = static_cast<double>(n);
          for (std::size_t j = 0; j < d; ++j) {
            const double mu = mean[j], is = inv_std[j], gam = gv[j];
            if (training) {
              double sum_dxhat = 0.0, sum_dxhat_c = 0.0;
              for (std::size_t i = 0; i < n; ++i) {
                const double dxh = o.grad[i * d + j] * gam;
                sum_dxhat += dxh;
                sum_dxhat_c += dxh * (xv[i * d + j] - mu);
              }
              for (std::size_t i = 0; i < n; ++i) {
                const double dxh = o.grad[i * d + j] * gam;
                gx[i * d + j] +=
                    is * (dxh - sum_dxhat / dn -
                          (xv[i * d + j] - mu) * is * is * sum_dxhat_c / dn);
              }
            } else {
              // Running statistics are constants wrt the input.
              for (std::size_t i = 0; i < n; ++i) gx[i * d + j] += o.grad[i * d + j] * gam * is;
            }
          }
        }
        if (pg.requires_grad()) {
          ensure_grad(*pg.node());
          std::vector<double>& gg = grad_of(pg);
          for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
              s += o.grad[i * d + j] * (xv[i * d + j] - mean[j]) * inv_std[j];
            gg[j] += s;
          }
        }
        if (pb.requires_grad()) {
          ensure_grad(*pb.node());
          std::vector<double>& gb = grad_of(pb);
          for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += o.grad[i * d + j];
            gb[j] += s;
          }
        }
      });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) {
    // Identity, but still a graph node so callers can rely on a fresh output.
    std::vector<double> out(x.values());
    return make_op(x.shape(), std::move(out), {x}, [](TensorNode& o) {
      Tensor p = o.parents[0];
      if (!p.requires_grad()) return;
      ensure_grad(*p.node());
      std::vector<double>& gp = grad_of(p);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gp[i] += o.grad[i];
    });
  }
  const double keep = 1.0 - rate;
  const double s = 1.0 / keep;
  std::vector<double> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform01() < keep ? s : 0.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  return make_op(x.shape(), std::move(out), {x}, [mask](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i) gp[i] += o.grad[i] * mask[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    check(p.rank() == 2 && p.rows() == n, "concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t off = 0;
  for (std::size_t s = 0; s < parts.size(); ++s) {
    const std::size_t w = widths[s];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out[i * total + off + j] = parts[s].values()[i * w + j];
    off += w;
  }
  return make_op({n, total}, std::move(out), parts, [n, total, widths](TensorNode& o) {
    std::size_t off = 0;
    for (std::size_t s = 0; s < o.parents.size(); ++s) {
      Tensor p = o.parents[s];
      const std::size_t w = widths[s];
      if (p.requires_grad()) {
        ensure_grad(*p.node());
        std::vector<double>& gp = grad_of(p);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += o.grad[i * total + off + j];
      }
      off += w;
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_rows: no inputs");
  const std::size_t d = parts[0].cols();
  std::size_t total = 0;
  std::vector<std::size_t> heights;
  for (const Tensor& p : parts) {
    check(p.rank() == 2 && p.cols() == d, "concat_rows: column count mismatch");
    heights.push_back(p.rows());
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_op({total, d}, std::move(out), parts, [d, heights](TensorNode& o) {
    std::size_t row = 0;
    for (std::size_t s = 0; s < o.parents.size(); ++s) {
      Tensor p = o.parents[s];
      const std::size_t h = heights[s];
      if (p.requires_grad()) {
        ensure_grad(*p.node());
        std::vector<double>& gp = grad_of(p);
        for (std::size_t i = 0; i < h * d; ++i) gp[i] += o.grad[row * d + i];
      }
      row += h;
    }
  });
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  check(n == x.numel(), "reshape: element count mismatch: " + shape_str(x.shape()) + " -> " +
                            shape_str(shape));
  std::vector<double> out(x.values());
  return make_op(std::move(shape), std::move(out), {x}, [](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i) gp[i] += o.grad[i];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  check(x.rank() == 2, "slice_rows: expects [n,d]");
  check(begin <= end && end <= x.rows(), "slice_rows: range out of bounds");
  const std::size_t d = x.cols(), m = end - begin;
  std::vector<double> out(m * d);
  std::copy(x.values().begin() + begin * d, x.values().begin() + end * d, out.begin());
  return make_op({m, d}, std::move(out), {x}, [begin, d, m](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < m * d; ++i) gp[begin * d + i] += o.grad[i];
  });
}

Tensor repeat_row(const Tensor& v, std::size_t n) {
  check(v.rank() == 1, "repeat_row: expects [d]");
  const std::size_t d = v.numel();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(v.values().begin(), v.values().end(), out.begin() + i * d);
  return make_op({n, d}, std::move(out), {v}, [n, d](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += o.grad[i * d + j];
      gp[j] += s;
    }
  });
}

Tensor max_over_points(const Tensor& x) {
  check(x.rank() == 2, "max_over_points: expects [n,d]");
  const std::size_t n = x.rows(), d = x.cols();
  check(n >= 1, "max_over_points: empty input");
  std::vector<double> out(d);
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = x.values()[j];
    std::size_t bi = 0;
    for (std::size_t i = 1; i < n; ++i) {
      const double v = x.values()[i * d + j];
      if (v > best) {  // strict: ties keep the lowest row index
        best = v;
        bi = i;
      }
    }
    out[j] = best;
    arg[j] = bi;
  }
  return make_op({d}, std::move(out), {x}, [d, arg](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t j = 0; j < d; ++j) gp[arg[j] * d + j] += o.grad[j];
  });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op({1}, {s}, {x}, [](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    ensure_grad(*p.node());
    std::vector<double>& gp = grad_of(p);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += o.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor pointwise_mlp(const Tensor& x, const std::vector<Tensor>& weights,
                     const std::vector<Tensor>& biases, bool relu_between) {
  check(weights.size() == biases.size(), "pointwise_mlp: weights/biases count mismatch");
  Tensor h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    check(h.cols() == weights[l].rows(),
          "pointwise_mlp: width mismatch at layer " + std::to_string(l) + ": input " +
              shape_str(h.shape()) + " vs weight " + shape_str(weights[l].shape()));
    h = add_bias(matmul(h, weights[l]), biases[l]);
    if (relu_between && l + 1 < weights.size()) h = relu(h);
  }
  return h;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS over the requires_grad subgraph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* child = node->parents[next].node();
      ++next;
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward) n->backward(*n);
  }
}

}  // namespace scnet
