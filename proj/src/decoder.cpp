#include "scnet/decoder.hpp"

#include <algorithm>
#include <stdexcept>

namespace scnet {

std::string to_string(SeedKind k) { return k == SeedKind::flat ? "flat" : "spatial"; }

std::string to_string(SeedDistribution d) {
  switch (d) {
    case SeedDistribution::uniform:
      return "uniform";
    case SeedDistribution::gaussian:
      return "gaussian";
    case SeedDistribution::zero:
      return "zero";
  }
  return "?";
}

SeedKind seed_kind_from_string(const std::string& s) {
  if (s == "flat") return SeedKind::flat;
  if (s == "spatial") return SeedKind::spatial;
  throw std::invalid_argument("unknown seed kind '" + s + "'");
}

SeedDistribution seed_distribution_from_string(const std::string& s) {
  if (s == "uniform") return SeedDistribution::uniform;
  if (s == "gaussian") return SeedDistribution::gaussian;
  if (s == "zero") return SeedDistribution::zero;
  throw std::invalid_argument("unknown seed distribution '" + s + "'");
}

void DecoderSpec::validate() const {
  if (surfaces == 0) throw std::invalid_argument("decoder: surfaces must be >= 1");
  if (points_per_surface == 0)
    throw std::invalid_argument("decoder: points_per_surface must be >= 1");
  if (conv_widths.size() != 3)
    throw std::invalid_argument("decoder: expected exactly three backbone widths");
  for (std::size_t w : conv_widths)
    if (w == 0) throw std::invalid_argument("decoder: zero backbone width");
  if (seed_distribution == SeedDistribution::uniform) {
    if (!(dist_a < dist_b) || dist_a < -1.0 || dist_b > 1.0)
      throw std::invalid_argument("decoder: uniform seed support must be inside [-1,1]");
  }
  if (seed_distribution == SeedDistribution::gaussian && dist_b < 0.0)
    throw std::invalid_argument("decoder: gaussian sigma must be >= 0");
}

DecoderSpec default_decoder_spec(Profile profile) {
  DecoderSpec spec;
  if (profile == Profile::full) {
    spec.points_per_surface = 2048 / spec.surfaces;
    spec.conv_widths = {513, 256, 128};
  } else {
    spec.points_per_surface = 256 / spec.surfaces;
    spec.conv_widths = {64, 32, 16};
  }
  spec.validate();
  return spec;
}

SeedBatch generate_seeds(const DecoderSpec& spec, std::uint64_t rng_seed) {
  return generate_seeds(spec, rng_seed, spec.out_points());
}

SeedBatch generate_seeds(const DecoderSpec& spec, std::uint64_t rng_seed, std::size_t count) {
  spec.validate();
  if (count == 0 || count % spec.surfaces != 0)
    throw std::invalid_argument("generate_seeds: count must be a positive multiple of K");
  const std::size_t s = spec.seed_dim();
  std::vector<double> vals(count * s, 0.0);
  Rng rng(rng_seed);
  switch (spec.seed_distribution) {
    case SeedDistribution::zero:
      break;
    case SeedDistribution::uniform:
      for (double& v : vals) v = rng.uniform(spec.dist_a, spec.dist_b);
      break;
    case SeedDistribution::gaussian:
      for (double& v : vals) v = std::clamp(rng.normal(spec.dist_a, spec.dist_b), -1.0, 1.0);
      break;
  }
  return SeedBatch{Tensor::from_values({count, s}, std::move(vals))};
}

std::size_t surface_of(std::size_t index, const DecoderSpec& spec) {
  if (index >= spec.out_points())
    throw std::invalid_argument("surface_of: index " + std::to_string(index) +
                                " out of range for " + std::to_string(spec.out_points()) +
                                " output points");
  return index / spec.points_per_surface;
}

Decoder::Decoder(const DecoderSpec& spec, std::size_t latent_dim, const InitSpec& init, Rng& rng)
    : spec_(spec), latent_dim_(latent_dim) {
  spec_.validate();
  if (latent_dim_ == 0) throw std::invalid_argument("decoder: latent_dim must be >= 1");
  const std::size_t generator_count = spec_.share_parameters ? 1 : spec_.surfaces;
  const std::size_t in_dim = latent_dim_ + spec_.seed_dim();
  for (std::size_t g = 0; g < generator_count; ++g) {
    Generator gen;
    std::size_t in = in_dim;
    for (std::size_t w : spec_.conv_widths) {
      gen.backbone.emplace_back(in, w, /*use_bn=*/true, /*use_relu=*/true, init, rng);
      in = w;
    }
    gen.head = Linear(in, 3, init, rng);
    generators_.push_back(std::move(gen));
  }
}

Tensor Decoder::forward(const Tensor& latent, const SeedBatch& seeds, bool training) {
  if (latent.rank() != 1 || latent.numel() != latent_dim_)
    throw std::invalid_argument("decoder: latent must be [" + std::to_string(latent_dim_) +
                                "], got " + shape_str(latent.shape()));
  if (seeds.seeds.rank() != 2 || seeds.seeds.cols() != spec_.seed_dim())
    throw std::invalid_argument("decoder: seed batch must be [P," +
                                std::to_string(spec_.seed_dim()) + "], got " +
                                shape_str(seeds.seeds.shape()));
  const std::size_t total = seeds.seeds.rows();
  if (total == 0 || total % spec_.surfaces != 0)
    throw std::invalid_argument("decoder: seed count " + std::to_string(total) +
                                " is not a multiple of K=" + std::to_string(spec_.surfaces));
  const std::size_t per_surface = total / spec_.surfaces;

  Tensor concat = concat_cols({repeat_row(latent, total), seeds.seeds});
  std::vector<Tensor> patches;
  patches.reserve(spec_.surfaces);
  for (std::size_t k = 0; k < spec_.surfaces; ++k) {
    Generator& gen = generators_[spec_.share_parameters ? 0 : k];
    Tensor h = slice_rows(concat, k * per_surface, (k + 1) * per_surface);
    for (auto& layer : gen.backbone) h = layer.forward(h, training);
    patches.push_back(scnet::tanh(gen.head.forward(h)));
  }
  return concat_rows(patches);  // surface-major order
}

std::vector<NamedParam> Decoder::parameters() {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> unused;
  for (std::size_t g = 0; g < generators_.size(); ++g) {
    const std::string prefix = "decoder.surface" + std::to_string(g);
    for (std::size_t l = 0; l < generators_[g].backbone.size(); ++l)
      generators_[g].backbone[l].collect(prefix + ".layer" + std::to_string(l), params, unused);
    generators_[g].head.collect(prefix + ".head", params);
  }
  return params;
}

std::vector<NamedBuffer> Decoder::buffers() {
  std::vector<NamedParam> unused;
  std::vector<NamedBuffer> buffers;
  for (std::size_t g = 0; g < generators_.size(); ++g) {
    const std::string prefix = "decoder.surface" + std::to_string(g);
    for (std::size_t l = 0; l < generators_[g].backbone.size(); ++l)
      generators_[g].backbone[l].collect(prefix + ".layer" + std::to_string(l), unused, buffers);
  }
  return buffers;
}

std::vector<BatchNorm1d*> Decoder::batch_norms() {
  std::vector<BatchNorm1d*> out;
  for (auto& gen : generators_)
    for (auto& layer : gen.backbone)
      if (layer.use_bn) out.push_back(&layer.bn);
  return out;
}

}  // namespace scnet
