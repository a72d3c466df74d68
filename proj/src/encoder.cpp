#include "scnet/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace scnet {

std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::mlp:
      return "mlp";
    case EncoderVariant::msf:
      return "msf";
    case EncoderVariant::cmlp:
      return "cmlp";
    case EncoderVariant::tmlp:
      return "tmlp";
  }
  return "?";
}

EncoderVariant encoder_variant_from_string(const std::string& s) {
  if (s == "mlp") return EncoderVariant::mlp;
  if (s == "msf") return EncoderVariant::msf;
  if (s == "cmlp") return EncoderVariant::cmlp;
  if (s == "tmlp") return EncoderVariant::tmlp;
  throw std::invalid_argument("unknown encoder variant '" + s + "'");
}

std::size_t EncoderSpec::latent_dim() const {
  if (variant == EncoderVariant::msf || variant == EncoderVariant::cmlp) {
    std::size_t sum = 0;
    const std::size_t k = std::min(fuse_layers, widths.size());
    for (std::size_t i = widths.size() - k; i < widths.size(); ++i) sum += widths[i];
    return sum;
  }
  return widths.back();
}

void EncoderSpec::validate() const {
  if (widths.empty()) throw std::invalid_argument("encoder: widths must not be empty");
  for (std::size_t w : widths)
    if (w == 0) throw std::invalid_argument("encoder: zero width");
  if (variant == EncoderVariant::tmlp) {
    if (widths.size() < 2)
      throw std::invalid_argument("encoder: tmlp needs at least two widths");
    if (heads == 0 || attn_dim % heads != 0)
      throw std::invalid_argument("encoder: attn_dim " + std::to_string(attn_dim) +
                                  " not divisible by heads " + std::to_string(heads));
    if (widths[widths.size() - 2] != attn_dim)
      throw std::invalid_argument("encoder: attention width " + std::to_string(attn_dim) +
                                  " must match the width before the final layer");
  }
  if ((variant == EncoderVariant::msf || variant == EncoderVariant::cmlp) && fuse_layers == 0)
    throw std::invalid_argument("encoder: fuse_layers must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("encoder: dropout_rate must be in [0,1)");
}

EncoderSpec default_encoder_spec(EncoderVariant variant, Profile profile) {
  const std::size_t s = profile == Profile::full ? 1 : 8;
  EncoderSpec spec;
  spec.variant = variant;
  switch (variant) {
    case EncoderVariant::mlp:
    case EncoderVariant::msf:
      spec.widths = {64 / s, 128 / s, 256 / s, 1024 / s};
      break;
    case EncoderVariant::cmlp:
      spec.widths = {64 / s, 128 / s, 256 / s, 512 / s};
      break;
    case EncoderVariant::tmlp:
      spec.widths = {64 / s, 128 / s, 1024 / s};
      break;
  }
  spec.fuse_layers = 3;
  spec.heads = 8;
  spec.attn_dim = 128 / s;
  spec.dropout_rate = 0.1;
  spec.validate();
  return spec;
}

MhsaBlock::MhsaBlock(std::size_t dim_, std::size_t heads_, double dropout_rate_,
                     const InitSpec& init, Rng& rng)
    : dim(dim_),
      heads(heads_),
      head_dim(dim_ / heads_),
      dropout_rate(dropout_rate_),
      out_proj(dim_, dim_, init, rng),
      norm_attn(dim_),
      norm_ff(dim_),
      ff1(dim_, 4 * dim_, init, rng),
      ff2(4 * dim_, dim_, init, rng) {
  for (std::size_t h = 0; h < heads; ++h) {
    q_proj.emplace_back(dim, head_dim, init, rng);
    k_proj.emplace_back(dim, head_dim, init, rng);
    v_proj.emplace_back(dim, head_dim, init, rng);
  }
}

Tensor MhsaBlock::forward(const Tensor& x, bool training, Rng* dropout_rng,
                          std::vector<Tensor>* attn_out) {
  if (x.rank() != 2 || x.cols() != dim)
    throw std::invalid_argument("mhsa: expected [n," + std::to_string(dim) + "], got " +
                                shape_str(x.shape()));
  if (training && dropout_rate > 0.0 && dropout_rng == nullptr)
    throw std::invalid_argument("mhsa: training with dropout needs an rng");

  const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor q = q_proj[h].forward(x);
    Tensor k = k_proj[h].forward(x);
    Tensor v = v_proj[h].forward(x);
    Tensor attn = softmax_rows(scale(matmul(q, transpose(k)), att_scale));
    if (attn_out) attn_out->push_back(attn);
    if (training && dropout_rate > 0.0) attn = dropout(attn, dropout_rate, true, *dropout_rng);
    // contraction over points: sorted accumulation keeps equivariance exact
    head_outs.push_back(matmul(attn, v, Accum::sorted));
  }
  Tensor z = out_proj.forward(concat_cols(head_outs));
  if (training && dropout_rate > 0.0) z = dropout(z, dropout_rate, true, *dropout_rng);
  Tensor a_out = norm_attn.forward(add(x, z));

  Tensor ff = ff2.forward(relu(ff1.forward(a_out)));
  if (training && dropout_rate > 0.0) ff = dropout(ff, dropout_rate, true, *dropout_rng);
  return norm_ff.forward(add(a_out, ff));
}

void MhsaBlock::collect(const std::string& prefix, std::vector<NamedParam>& params) {
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    q_proj[h].collect(hp + ".q", params);
    k_proj[h].collect(hp + ".k", params);
    v_proj[h].collect(hp + ".v", params);
  }
  out_proj.collect(prefix + ".out", params);
  norm_attn.collect(prefix + ".norm_attn", params);
  ff1.collect(prefix + ".ff1", params);
  ff2.collect(prefix + ".ff2", params);
  norm_ff.collect(prefix + ".norm_ff", params);
}

Encoder::Encoder(const EncoderSpec& spec, const InitSpec& init, Rng& rng) : spec_(spec) {
  spec_.validate();
  std::size_t in = 3;
  for (std::size_t w : spec_.widths) {
    layers_.emplace_back(in, w, /*use_bn=*/true, /*use_relu=*/true, init, rng);
    in = w;
  }
  if (spec_.variant == EncoderVariant::tmlp)
    mhsa_ = MhsaBlock(spec_.attn_dim, spec_.heads, spec_.dropout_rate, init, rng);
}

Tensor Encoder::forward(const Tensor& points, bool training, Rng* dropout_rng) {
  if (points.rank() != 2 || points.cols() != 3)
    throw std::invalid_argument("encoder: expected [n,3] points, got " +
                                shape_str(points.shape()));
  if (points.rows() == 0) throw std::invalid_argument("encoder: empty cloud");

  switch (spec_.variant) {
    case EncoderVariant::mlp: {
      Tensor h = points;
      for (auto& layer : layers_) h = layer.forward(h, training);
      return max_over_points(h);
    }
    case EncoderVariant::msf:
    case EncoderVariant::cmlp: {
      Tensor h = points;
      std::vector<Tensor> pooled;
      const std::size_t k = std::min(spec_.fuse_layers, layers_.size());
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].forward(h, training);
        if (i + k >= layers_.size())
          pooled.push_back(reshape(max_over_points(h), {1, spec_.widths[i]}));
      }
      return reshape(concat_cols(pooled), {spec_.latent_dim()});
    }
    case EncoderVariant::tmlp: {
      Tensor h = points;
      for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = layers_[i].forward(h, training);
      h = mhsa_.forward(h, training, dropout_rng);
      h = layers_.back().forward(h, training);
      return max_over_points(h);
    }
  }
  throw std::logic_error("encoder: unreachable");
}

std::vector<NamedParam> Encoder::parameters() {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> unused;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect("encoder.layer" + std::to_string(i), params, unused);
  if (spec_.variant == EncoderVariant::tmlp) mhsa_.collect("encoder.mhsa", params);
  return params;
}

std::vector<NamedBuffer> Encoder::buffers() {
  std::vector<NamedParam> unused;
  std::vector<NamedBuffer> buffers;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect("encoder.layer" + std::to_string(i), unused, buffers);
  return buffers;
}

std::vector<BatchNorm1d*> Encoder::batch_norms() {
  std::vector<BatchNorm1d*> out;
  for (auto& layer : layers_)
    if (layer.use_bn) out.push_back(&layer.bn);
  return out;
}

}  // namespace scnet
