#pragma once

#include <vector>

#include "scnet/nn.hpp"
#include "scnet/profile.hpp"
#include "scnet/tensor.hpp"

namespace scnet {

// The four encoder families. All end in a column-wise max pool, which is what
// makes them exactly permutation invariant.
//   mlp : plain per-point chain, latent = last width
//   msf : per-point chain, maxpools of the last fuse_layers widths fused
//   cmlp: shorter chain, maxpools of the last fuse_layers widths concatenated
//   tmlp: per-point chain with a multi-head self-attention block inserted
//         before the final width
enum class EncoderVariant { mlp, msf, cmlp, tmlp };

std::string to_string(EncoderVariant v);
EncoderVariant encoder_variant_from_string(const std::string& s);

struct EncoderSpec {
  EncoderVariant variant = EncoderVariant::tmlp;
  // widths of the per-point chain applied to the 3-d input, in order; for
  // tmlp the attention block sits before the last entry
  std::vector<std::size_t> widths;
  std::size_t fuse_layers = 3;  // msf/cmlp: how many trailing maxpools to fuse
  std::size_t heads = 8;        // tmlp
  std::size_t attn_dim = 128;   // tmlp; must equal widths[end-2]
  double dropout_rate = 0.1;    // tmlp, inside the attention block

  std::size_t latent_dim() const;
  void validate() const;
};

// The published widths for the chosen variant, scaled down 8x for the toy
// profile.
EncoderSpec default_encoder_spec(EncoderVariant variant, Profile profile);

// Scaled dot-product multi-head self-attention with residual add + layer
// norm and a feed-forward sublayer, no positional encoding. Input and output
// are both [n, dim]. Reductions over the point dimension use sorted
// accumulation, so the block is exactly permutation equivariant.
struct MhsaBlock {
  std::size_t dim = 0, heads = 0, head_dim = 0;
  double dropout_rate = 0.0;
  std::vector<Linear> q_proj, k_proj, v_proj;  // per head, dim -> head_dim
  Linear out_proj;                             // dim -> dim
  LayerNorm norm_attn, norm_ff;
  Linear ff1, ff2;  // dim -> 4*dim -> dim

  MhsaBlock() = default;
  MhsaBlock(std::size_t dim, std::size_t heads, double dropout_rate, const InitSpec& init,
            Rng& rng);

  // dropout_rng may be null when training == false. attn_out, when given,
  // receives the post-softmax attention matrix of every head.
  Tensor forward(const Tensor& x, bool training, Rng* dropout_rng,
                 std::vector<Tensor>* attn_out = nullptr);
  void collect(const std::string& prefix, std::vector<NamedParam>& params);
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderSpec& spec, const InitSpec& init, Rng& rng);

  // [n,3] points -> [latent_dim] feature vector.
  Tensor forward(const Tensor& points, bool training, Rng* dropout_rng = nullptr);

  const EncoderSpec& spec() const { return spec_; }
  std::vector<NamedParam> parameters();
  std::vector<NamedBuffer> buffers();
  std::vector<BatchNorm1d*> batch_norms();

 private:
  EncoderSpec spec_;
  std::vector<PointwiseLayer> layers_;
  MhsaBlock mhsa_;
};

}  // namespace scnet
