#pragma once

#include <cstdint>
#include <vector>

#include "scnet/nn.hpp"
#include "scnet/profile.hpp"
#include "scnet/tensor.hpp"

namespace scnet {

enum class SeedKind { flat, spatial };          // 2-d or 3-d seed points
enum class SeedDistribution { uniform, gaussian, zero };

std::string to_string(SeedKind k);
std::string to_string(SeedDistribution d);
SeedKind seed_kind_from_string(const std::string& s);
SeedDistribution seed_distribution_from_string(const std::string& s);

// Decoder: K independent surface generators. Each maps its share of the seed
// points, concatenated with the global latent vector, through three
// pointwise backbone layers and a final tanh layer to a 3-d patch; the
// montage of the K patches is the completed cloud.
struct DecoderSpec {
  std::size_t surfaces = 16;  // K
  SeedKind seed_kind = SeedKind::flat;
  SeedDistribution seed_distribution = SeedDistribution::uniform;
  double dist_a = 0.0;  // uniform: lower bound; gaussian: mean
  double dist_b = 1.0;  // uniform: upper bound; gaussian: sigma
  std::size_t points_per_surface = 128;
  std::vector<std::size_t> conv_widths = {513, 256, 128};  // backbone widths
  bool share_parameters = false;  // ablation switch: one generator for all K

  std::size_t out_points() const { return surfaces * points_per_surface; }
  std::size_t seed_dim() const { return seed_kind == SeedKind::flat ? 2 : 3; }
  void validate() const;
};

DecoderSpec default_decoder_spec(Profile profile);

struct SeedBatch {
  Tensor seeds;  // [out_points, seed_dim], constant
};

// Deterministic per rng_seed. Gaussian draws are clamped to [-1,1]; the
// uniform support must already lie within [-1,1].
SeedBatch generate_seeds(const DecoderSpec& spec, std::uint64_t rng_seed);
// Same distribution at a different resolution (count must be a multiple of K).
SeedBatch generate_seeds(const DecoderSpec& spec, std::uint64_t rng_seed, std::size_t count);

// Patch bookkeeping: which surface produced the point at this output index.
std::size_t surface_of(std::size_t index, const DecoderSpec& spec);

class Decoder {
 public:
  Decoder() = default;
  Decoder(const DecoderSpec& spec, std::size_t latent_dim, const InitSpec& init, Rng& rng);

  // [latent_dim] + seeds -> [P, 3] points in [-1,1]^3. P is taken from the
  // seed batch, so one set of parameters decodes at any resolution that is a
  // multiple of K.
  Tensor forward(const Tensor& latent, const SeedBatch& seeds, bool training);

  const DecoderSpec& spec() const { return spec_; }
  std::size_t latent_dim() const { return latent_dim_; }
  std::vector<NamedParam> parameters();
  std::vector<NamedBuffer> buffers();
  std::vector<BatchNorm1d*> batch_norms();

 private:
  struct Generator {
    std::vector<PointwiseLayer> backbone;
    Linear head;  // last backbone width -> 3, followed by tanh
  };

  DecoderSpec spec_;
  std::size_t latent_dim_ = 0;
  std::vector<Generator> generators_;  // size K, or 1 when share_parameters
};

}  // namespace scnet
