#ifndef STMFG_TRAINER_HPP
#define STMFG_TRAINER_HPP

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stmfg/errors.hpp"
#include "stmfg/graph.hpp"
#include "stmfg/losses.hpp"
#include "stmfg/model.hpp"
#include "stmfg/optim.hpp"

namespace stmfg {

/// How the spatial term enters the objective.
enum class RegReduction {
  PairMean,  // averaged over the N(N-1) ordered spot pairs
  Sum,       // raw sum; dwarfs the other (averaged) terms at N in the hundreds
};

/// Which view-specific embeddings feed the contrastive term.
enum class ContrastiveLayers {
  Last,  // z_s and z_f of the final layer
  All,   // sum of the per-layer losses
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  int epochs = 200;
  LossWeights weights;
  double tau = 0.5;
  std::uint64_t seed = 0;
  ModelConfig model;
  double radius = kDefaultRadius;
  int knn_k = kDefaultKnn;
  ContrastiveLayers contrastive_layers = ContrastiveLayers::Last;
  RegReduction reg_reduction = RegReduction::PairMean;

  // Ablations
  bool disable_fusion = false;  // late fusion instead of per-layer fusion
  bool disable_cl = false;
  bool disable_reg = false;
  bool disable_zinb = false;

  void validate() const {
    detail::require(lr > 0.0, "TrainConfig: lr must be positive");
    detail::require(weight_decay >= 0.0, "TrainConfig: weight_decay must be >= 0");
    detail::require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    detail::require(weights.alpha >= 0.0 && weights.lambda >= 0.0 && weights.gamma >= 0.0,
                    "TrainConfig: loss weights must be >= 0");
    detail::require(tau > 0.0, "TrainConfig: tau must be positive");
    detail::require(radius > 0.0, "TrainConfig: radius must be positive");
    detail::require(knn_k >= 1, "TrainConfig: knn_k must be >= 1");
  }

  LossWeights effective_weights() const {
    LossWeights w = weights;
    if (disable_zinb) w.alpha = 0.0;
    if (disable_cl) w.lambda = 0.0;
    if (disable_reg) w.gamma = 0.0;
    return w;
  }

  ModelConfig effective_model() const {
    ModelConfig m = model;
    if (disable_fusion) m.fusion = FusionMode::Late;
    return m;
  }

  AdamConfig adam() const {
    AdamConfig a;
    a.lr = lr;
    a.weight_decay = weight_decay;
    return a;
  }
};

/// Model input and reconstruction target for one tissue section.
struct TrainData {
  Matrix features;  // N x H model input
  Matrix target;    // N x M reconstruction target (counts)
  bool fractional_target = false;
  GraphPair graphs;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  ForwardTrace trace;
  TrainLog log;
};

/// Evaluates the weighted objective on a forward trace. Disabled terms are
/// still evaluated for logging, on detached inputs.
inline LossTerms compute_loss(const ForwardTrace& tr, const TrainData& data, const TrainConfig& cfg) {
  const LossWeights w = cfg.effective_weights();
  auto maybe_detach = [](const Tensor& t, bool keep) { return keep ? t : t.detach(); };

  const bool zinb_on = w.alpha > 0.0;
  const Tensor zinb = zinb_nll(data.target, maybe_detach(tr.pi, zinb_on), maybe_detach(tr.mu, zinb_on),
                               maybe_detach(tr.theta, zinb_on), data.fractional_target);

  const bool cl_on = w.lambda > 0.0;
  Tensor cl;
  if (cfg.contrastive_layers == ContrastiveLayers::Last) {
    cl = contrastive_loss(maybe_detach(tr.z_s.back(), cl_on), maybe_detach(tr.z_f.back(), cl_on), cfg.tau);
  } else {
    for (std::size_t l = 0; l < tr.z_s.size(); ++l) {
      Tensor term = contrastive_loss(maybe_detach(tr.z_s[l], cl_on), maybe_detach(tr.z_f[l], cl_on), cfg.tau);
      cl = l == 0 ? term : add(cl, term);
    }
  }

  const bool reg_on = w.gamma > 0.0;
  Tensor reg = spatial_reg_loss(maybe_detach(tr.z_final, reg_on), data.graphs.a_s);
  const double n = static_cast<double>(tr.z_final.rows());
  if (cfg.reg_reduction == RegReduction::PairMean && n > 1.0) reg = scale(reg, 1.0 / (n * (n - 1.0)));
  return total_loss(zinb, cl, reg, w);
}

namespace detail {

inline void check_finite_loss(const LossBreakdown& b, int epoch) {
  const std::pair<const char*, double> parts[] = {
      {"zinb", b.zinb}, {"cl", b.cl}, {"reg", b.reg}, {"total", b.total}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) {
      throw NumericalError("epoch " + std::to_string(epoch) + ": " + name + " loss is not finite (" +
                           std::to_string(v) + ")");
    }
  }
}

inline void check_finite_forward(const ForwardTrace& tr, int epoch) {
  const std::pair<const char*, const Tensor*> parts[] = {
      {"embedding", &tr.z_final}, {"pi", &tr.pi}, {"mu", &tr.mu}, {"theta", &tr.theta}};
  for (const auto& [name, t] : parts) {
    if (!t->all_finite()) throw NumericalError("epoch " + std::to_string(epoch) + ": " + name + " is not finite");
  }
}

}  // namespace detail

using EpochCallback = std::function<void(const EpochRecord&, const ModelParams&)>;

/// Full-batch training: forward, loss, backward and one Adam step per epoch.
/// The returned trace is a final forward pass with the trained parameters.
inline TrainResult train(const TrainData& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  detail::require_dims(data.features.rows() == data.target.rows(),
                       "train: feature and target spot counts differ");
  detail::require_dims(data.graphs.a_s.n() == data.features.rows() && data.graphs.a_f.n() == data.features.rows(),
                       "train: graphs do not match the spot count");

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const ModelConfig model_cfg = cfg.effective_model();
  TrainResult result;
  result.params = init_params(model_cfg, data.features.cols(), data.target.cols(), cfg.seed);
  Adam opt(result.params.tensors(), cfg.adam());
  const Tensor x = Tensor::constant(data.features);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = clock::now();
    const ForwardTrace tr = forward(x, data.graphs, result.params, model_cfg);
    detail::check_finite_forward(tr, epoch);
    const LossTerms loss = compute_loss(tr, data, cfg);
    detail::check_finite_loss(loss.breakdown, epoch);
    opt.zero_grad();
    backward(loss.total);
    opt.step();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss.breakdown;
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, result.params);
  }

  result.trace = forward(x, data.graphs, result.params, model_cfg);
  result.log.seconds = std::chrono::duration<double>(clock::now() - start).count();
  return result;
}

}  // namespace stmfg

#endif  // STMFG_TRAINER_HPP
