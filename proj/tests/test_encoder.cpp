#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle_helpers.hpp"
#include "scnet/encoder.hpp"
#include "scnet/rng.hpp"

using namespace scnet;
using scnet::testing::finite_diff_grad;
using scnet::testing::grads_close;

namespace {

Tensor random_points(std::size_t n, Rng& rng) {
  Tensor t = Tensor::zeros({n, 3});
  for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& order) {
  Tensor out = Tensor::zeros({x.rows(), x.cols()});
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      out.values()[i * x.cols() + j] = x.at(order[i], j);
  return out;
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng);
  return order;
}

EncoderSpec tiny_tmlp_spec() {
  EncoderSpec spec;
  spec.variant = EncoderVariant::tmlp;
  spec.widths = {4, 8, 12};
  spec.heads = 2;
  spec.attn_dim = 8;
  spec.dropout_rate = 0.0;
  spec.validate();
  return spec;
}

}  // namespace

TEST_CASE("default specs: latent widths and validation") {
  CHECK(default_encoder_spec(EncoderVariant::mlp, Profile::full).latent_dim() == 1024);
  CHECK(default_encoder_spec(EncoderVariant::msf, Profile::full).latent_dim() == 1408);
  CHECK(default_encoder_spec(EncoderVariant::cmlp, Profile::full).latent_dim() == 896);
  CHECK(default_encoder_spec(EncoderVariant::tmlp, Profile::full).latent_dim() == 1024);
  CHECK(default_encoder_spec(EncoderVariant::tmlp, Profile::toy).latent_dim() == 128);

  EncoderSpec bad = default_encoder_spec(EncoderVariant::tmlp, Profile::full);
  bad.heads = 7;  // 128 % 7 != 0
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("mhsa keeps the published shape: (n,128) -> (n,128)") {
  Rng rng(1);
  InitSpec init;
  MhsaBlock block(128, 8, 0.1, init, rng);
  Tensor x = random_points(64, rng);
  Tensor lifted = Tensor::zeros({64, 128});
  for (std::size_t i = 0; i < lifted.numel(); ++i) lifted.values()[i] = rng.uniform(-1, 1);
  Tensor out = block.forward(lifted, false, nullptr);
  CHECK(out.rows() == 64);
  CHECK(out.cols() == 128);
}

TEST_CASE("mhsa with zeroed mixing weights is norm-of-norm of the input") {
  Rng rng(2);
  InitSpec init;
  MhsaBlock block(8, 2, 0.0, init, rng);
  // zero the attention output projection and the second feed-forward layer
  std::fill(block.out_proj.w.values().begin(), block.out_proj.w.values().end(), 0.0);
  std::fill(block.out_proj.b.values().begin(), block.out_proj.b.values().end(), 0.0);
  std::fill(block.ff2.w.values().begin(), block.ff2.w.values().end(), 0.0);
  std::fill(block.ff2.b.values().begin(), block.ff2.b.values().end(), 0.0);

  Tensor x = Tensor::zeros({5, 8});
  for (double& v : x.values()) v = rng.uniform(-2, 2);
  Tensor out = block.forward(x, false, nullptr);
  Tensor expect = block.norm_ff.forward(block.norm_attn.forward(x));
  for (std::size_t i = 0; i < out.numel(); ++i)
    CHECK(out.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
}

TEST_CASE("mhsa is exactly permutation equivariant, 10 seeds") {
  InitSpec init;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    MhsaBlock block(16, 4, 0.1, init, rng);
    Tensor x = Tensor::zeros({12, 16});
    for (double& v : x.values()) v = rng.uniform(-1, 1);
    const auto order = random_permutation(12, rng);
    Tensor out = block.forward(x, false, nullptr);
    Tensor out_perm = block.forward(permute_rows(x, order), false, nullptr);
    for (std::size_t i = 0; i < order.size(); ++i)
      for (std::size_t j = 0; j < 16; ++j)
        CHECK(out_perm.at(i, j) == out.at(order[i], j));  // bitwise
  }
}

TEST_CASE("attention rows sum to 1 per head within 1e-9") {
  Rng rng(3);
  InitSpec init;
  MhsaBlock block(16, 4, 0.1, init, rng);
  Tensor x = Tensor::zeros({20, 16});
  for (double& v : x.values()) v = rng.uniform(-3, 3);
  std::vector<Tensor> attn;
  block.forward(x, false, nullptr, &attn);
  REQUIRE(attn.size() == 4);
  for (const Tensor& a : attn) {
    REQUIRE(a.rows() == 20);
    REQUIRE(a.cols() == 20);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) sum += a.at(i, j);
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("encode is exactly permutation invariant for all four variants") {
  InitSpec init;
  for (EncoderVariant v : {EncoderVariant::mlp, EncoderVariant::msf, EncoderVariant::cmlp,
                           EncoderVariant::tmlp}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(100 + seed);
      Encoder enc(default_encoder_spec(v, Profile::toy), init, rng);
      Tensor pts = random_points(33, rng);
      const auto order = random_permutation(33, rng);
      // both modes: batch statistics use sorted sums, so training mode is
      // exactly invariant too
      for (bool training : {false, true}) {
        Rng drop1(7), drop2(7);
        Tensor lat = enc.forward(pts, training, v == EncoderVariant::tmlp ? &drop1 : nullptr);
        Tensor lat_perm = enc.forward(permute_rows(pts, order), training,
                                      v == EncoderVariant::tmlp ? &drop2 : nullptr);
        if (training && v == EncoderVariant::tmlp) continue;  // dropout masks differ per order
        CHECK(lat.values() == lat_perm.values());  // bitwise
      }
    }
  }
}

TEST_CASE("duplicating every point leaves the eval-mode latent unchanged") {
  InitSpec init;
  for (EncoderVariant v : {EncoderVariant::mlp, EncoderVariant::msf, EncoderVariant::cmlp,
                           EncoderVariant::tmlp}) {
    Rng rng(200);
    Encoder enc(default_encoder_spec(v, Profile::toy), init, rng);
    Tensor pts = random_points(17, rng);
    std::vector<double> doubled_vals;
    for (int rep = 0; rep < 2; ++rep)
      doubled_vals.insert(doubled_vals.end(), pts.values().begin(), pts.values().end());
    Tensor doubled = Tensor::from_values({34, 3}, doubled_vals);
    Tensor lat = enc.forward(pts, false);
    Tensor lat2 = enc.forward(doubled, false);
    if (v == EncoderVariant::tmlp) {
      // attention denominators sum n vs 2n terms, so equality holds to
      // rounding rather than bitwise
      for (std::size_t i = 0; i < lat.numel(); ++i)
        CHECK(lat.values()[i] == doctest::Approx(lat2.values()[i]).epsilon(1e-9));
    } else {
      CHECK(lat.values() == lat2.values());  // bitwise: per-point ops + maxpool
    }
  }
}

TEST_CASE("tmlp default latent is 1024-wide for the full profile") {
  Rng rng(4);
  InitSpec init;
  Encoder enc(default_encoder_spec(EncoderVariant::tmlp, Profile::full), init, rng);
  Tensor pts = random_points(32, rng);
  Tensor lat = enc.forward(pts, false);
  CHECK(lat.rank() == 1);
  CHECK(lat.numel() == 1024);
}

TEST_CASE("encode with dropout off is deterministic") {
  Rng rng(5);
  InitSpec init;
  Encoder enc(default_encoder_spec(EncoderVariant::tmlp, Profile::toy), init, rng);
  Tensor pts = random_points(21, rng);
  Tensor a = enc.forward(pts, false);
  Tensor b = enc.forward(pts, false);
  CHECK(a.values() == b.values());
}

TEST_CASE("tmlp encoder gradients match finite differences at tiny widths") {
  Rng rng(6);
  InitSpec init;
  init.sigma = 0.5;  // unit-scale activations keep finite differences clean
  Encoder enc(tiny_tmlp_spec(), init, rng);
  Tensor pts = random_points(8, rng);
  auto params = enc.parameters();
  auto forward = [&] {
    Tensor lat = enc.forward(pts, false);
    return sum_all(mul(lat, lat));
  };
  backward(forward());
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.tensor.grad());
  std::size_t checked = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto fd = scnet::testing::finite_diff_grad_checked([&] { return forward().item(); },
                                                       params[pi].tensor);
    INFO("param ", params[pi].name);
    CHECK(scnet::testing::grads_close_masked(analytic[pi], fd, 1e-4));
    checked += fd.valid_count;
  }
  CHECK(checked > 500);  // the whole network was exercised
}

TEST_CASE("mhsa gradients match finite differences (n=8, d=8, heads=2)") {
  Rng rng(7);
  InitSpec init;
  MhsaBlock block(8, 2, 0.0, init, rng);
  Tensor x = Tensor::zeros({8, 8}, true);
  for (double& v : x.values()) v = rng.uniform(-1, 1);
  Tensor w = Tensor::zeros({8, 8});
  for (double& v : w.values()) v = rng.uniform(-1, 1);
  auto forward = [&] { return sum_all(mul(block.forward(x, false, nullptr), w)); };
  backward(forward());
  auto fd = finite_diff_grad([&] { return forward().item(); }, x);
  CHECK(grads_close(x.grad(), fd, 1e-4));
}

TEST_CASE("encoder rejects malformed input") {
  Rng rng(8);
  InitSpec init;
  Encoder enc(default_encoder_spec(EncoderVariant::mlp, Profile::toy), init, rng);
  CHECK_THROWS_AS(enc.forward(Tensor::zeros({5, 2}), false), std::invalid_argument);
  CHECK_THROWS_AS(enc.forward(Tensor::zeros({0, 3}), false), std::invalid_argument);
}
