#ifndef STMFG_MODEL_HPP
#define STMFG_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stmfg/errors.hpp"
#include "stmfg/graph.hpp"
#include "stmfg/tensor.hpp"

namespace stmfg {

enum class FusionMode {
  Layerwise,  // fuse after every layer and feed the fused embedding to both views
  Late,       // run each view independently and fuse once at the output
};

struct ModelConfig {
  /// Hidden widths after the input layer; the input width comes from the data.
  std::vector<Index> hidden_dims{128, 64};
  Index decoder_hidden = 128;
  double leaky_slope = 0.2;
  /// Apply the row-wise l2 normalization after the attention softmax.
  bool attention_l2 = true;
  FusionMode fusion = FusionMode::Layerwise;
};

inline constexpr double kMuLogitBound = 12.0;
inline constexpr double kThetaFloor = 1e-4;
inline constexpr double kPiGuard = 1e-10;

struct LayerParams {
  Tensor w_s;
  Tensor w_f;
  Tensor w_a;  // 0x0 when the layer does not fuse (late fusion, non-final layers)
};

struct DecoderParams {
  Tensor w_h, b_h;
  Tensor w_pi, b_pi;
  Tensor w_mu, b_mu;
  Tensor w_theta, b_theta;
};

struct ModelParams {
  std::vector<LayerParams> layers;
  DecoderParams decoder;

  /// Every learnable tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto idx = std::to_string(l);
      out.emplace_back("layer" + idx + ".w_s", layers[l].w_s);
      out.emplace_back("layer" + idx + ".w_f", layers[l].w_f);
      if (layers[l].w_a.size() > 0) out.emplace_back("layer" + idx + ".w_a", layers[l].w_a);
    }
    out.emplace_back("decoder.w_h", decoder.w_h);
    out.emplace_back("decoder.b_h", decoder.b_h);
    out.emplace_back("decoder.w_pi", decoder.w_pi);
    out.emplace_back("decoder.b_pi", decoder.b_pi);
    out.emplace_back("decoder.w_mu", decoder.w_mu);
    out.emplace_back("decoder.b_mu", decoder.b_mu);
    out.emplace_back("decoder.w_theta", decoder.w_theta);
    out.emplace_back("decoder.b_theta", decoder.b_theta);
    return out;
  }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  Index output_dim() const { return layers.empty() ? 0 : layers.back().w_s.cols(); }
};

namespace detail {

// Uniform double in [0, 1) from the top 53 bits; avoids the
// implementation-defined std::uniform_real_distribution.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Tensor glorot(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Index k = 0; k < w.size(); ++k) w.data()[k] = (2.0 * unit_uniform(rng) - 1.0) * bound;
  return Tensor::parameter(std::move(w));
}

inline Tensor zero_bias(Index width) { return Tensor::parameter(Matrix::Zero(1, width)); }

}  // namespace detail

/// Glorot-uniform weights and zero biases, reproducible from the seed.
inline ModelParams init_params(const ModelConfig& cfg, Index input_dim, Index genes, std::uint64_t seed) {
  detail::require(!cfg.hidden_dims.empty(), "init_params: at least one layer is required");
  detail::require(input_dim > 0 && genes > 0, "init_params: empty input or output width");
  std::mt19937_64 rng(seed);
  ModelParams p;
  Index in = input_dim;
  for (std::size_t l = 0; l < cfg.hidden_dims.size(); ++l) {
    const Index out = cfg.hidden_dims[l];
    detail::require(out > 0, "init_params: layer widths must be positive");
    LayerParams layer;
    layer.w_s = detail::glorot(in, out, rng);
    layer.w_f = detail::glorot(in, out, rng);
    const bool fuses = cfg.fusion == FusionMode::Layerwise || l + 1 == cfg.hidden_dims.size();
    layer.w_a = fuses ? detail::glorot(2 * out, 2, rng) : Tensor::constant(Matrix(0, 0));
    p.layers.push_back(std::move(layer));
    in = out;
  }
  const Index h = cfg.decoder_hidden;
  p.decoder.w_h = detail::glorot(in, h, rng);
  p.decoder.b_h = detail::zero_bias(h);
  p.decoder.w_pi = detail::glorot(h, genes, rng);
  p.decoder.b_pi = detail::zero_bias(genes);
  p.decoder.w_mu = detail::glorot(h, genes, rng);
  p.decoder.b_mu = detail::zero_bias(genes);
  p.decoder.w_theta = detail::glorot(h, genes, rng);
  p.decoder.b_theta = detail::zero_bias(genes);
  return p;
}

/// relu(A_norm * z * w)
inline Tensor gcn_layer(const SparseMatrix& a_norm, const Tensor& z, const Tensor& w) {
  return relu(matmul(spmm(a_norm, z), w));
}

struct FusionResult {
  Tensor z;        // fused embedding, N x d
  Tensor m;        // fusion weights, N x 2
  Tensor softmax;  // attention softmax before the l2 step, N x 2
};

/// Cross-view attention: m = l2(softmax(leaky_relu([z_s | z_f] w_a))), then
/// z = m[:,0] * z_s + m[:,1] * z_f row by row.
inline FusionResult attention_fuse(const Tensor& z_s, const Tensor& z_f, const Tensor& w_a,
                                   double leaky_slope = 0.2, bool l2 = true) {
  detail::require_same_shape(z_s, z_f, "attention_fuse");
  detail::require_dims(w_a.rows() == 2 * z_s.cols() && w_a.cols() == 2,
                       "attention_fuse: w_a must be " + std::to_string(2 * z_s.cols()) + "x2, got " +
                           detail::shape_str(w_a));
  FusionResult r;
  r.softmax = softmax_rows(leaky_relu(matmul(concat_cols(z_s, z_f), w_a), leaky_slope));
  r.m = l2 ? row_l2_normalize(r.softmax) : r.softmax;
  r.z = add(scale_rows(z_s, column(r.m, 0)), scale_rows(z_f, column(r.m, 1)));
  return r;
}

struct ForwardTrace {
  Tensor z_final;
  std::vector<Tensor> z_s;  // per layer
  std::vector<Tensor> z_f;
  std::vector<Tensor> m;        // per fusion step
  std::vector<Tensor> softmax;  // per fusion step, pre-l2
  Tensor pi, mu, theta;
};

inline ForwardTrace encode(const Tensor& x, const SparseMatrix& a_s_norm, const SparseMatrix& a_f_norm,
                           const ModelParams& params, const ModelConfig& cfg) {
  detail::require(!params.layers.empty(), "encode: model has no layers");
  detail::require_dims(x.rows() == a_s_norm.n() && x.rows() == a_f_norm.n(),
                       "encode: spot count does not match the graphs");
  ForwardTrace tr;
  const std::size_t depth = params.layers.size();
  auto record = [&](FusionResult&& f) {
    tr.m.push_back(f.m);
    tr.softmax.push_back(f.softmax);
    return f.z;
  };

  if (cfg.fusion == FusionMode::Layerwise) {
    Tensor z = x;
    for (const auto& layer : params.layers) {
      Tensor zs = gcn_layer(a_s_norm, z, layer.w_s);
      Tensor zf = gcn_layer(a_f_norm, z, layer.w_f);
      z = record(attention_fuse(zs, zf, layer.w_a, cfg.leaky_slope, cfg.attention_l2));
      tr.z_s.push_back(std::move(zs));
      tr.z_f.push_back(std::move(zf));
    }
    tr.z_final = z;
  } else {
    Tensor zs = x;
    Tensor zf = x;
    for (const auto& layer : params.layers) {
      zs = gcn_layer(a_s_norm, zs, layer.w_s);
      zf = gcn_layer(a_f_norm, zf, layer.w_f);
      tr.z_s.push_back(zs);
      tr.z_f.push_back(zf);
    }
    tr.z_final = record(attention_fuse(zs, zf, params.layers[depth - 1].w_a, cfg.leaky_slope, cfg.attention_l2));
  }
  return tr;
}

struct ZinbParams {
  Tensor pi, mu, theta;
};

/// Decoder heads from the shared hidden layer h = relu(z W_h + b_h).
inline ZinbParams zinb_decode(const Tensor& z, const ModelParams& params) {
  const auto& d = params.decoder;
  detail::require_dims(z.cols() == d.w_h.rows(), "zinb_decode: embedding width " + std::to_string(z.cols()) +
                                                     " vs decoder input " + std::to_string(d.w_h.rows()));
  const Tensor h = relu(add_row(matmul(z, d.w_h), d.b_h));
  ZinbParams out;
  // Keeps log(pi) and log(1 - pi) finite when the logit saturates.
  out.pi = clamp(sigmoid(add_row(matmul(h, d.w_pi), d.b_pi)), kPiGuard, 1.0 - kPiGuard);
  out.mu = exp(clamp(add_row(matmul(h, d.w_mu), d.b_mu), -kMuLogitBound, kMuLogitBound));
  out.theta = add_scalar(softplus(add_row(matmul(h, d.w_theta), d.b_theta)), kThetaFloor);
  return out;
}

inline ForwardTrace forward(const Tensor& x, const GraphPair& graphs, const ModelParams& params,
                            const ModelConfig& cfg) {
  ForwardTrace tr = encode(x, graphs.a_s_norm, graphs.a_f_norm, params, cfg);
  ZinbParams z = zinb_decode(tr.z_final, params);
  tr.pi = z.pi;
  tr.mu = z.mu;
  tr.theta = z.theta;
  return tr;
}

}  // namespace stmfg

#endif  // STMFG_MODEL_HPP
