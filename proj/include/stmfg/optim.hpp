#ifndef STMFG_OPTIM_HPP
#define STMFG_OPTIM_HPP

#include <cmath>
#include <utility>
#include <vector>

#include "stmfg/errors.hpp"
#include "stmfg/tensor.hpp"

namespace stmfg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Coupled L2 penalty: weight_decay * w is added to the gradient.
  double weight_decay = 5e-4;
};

/// Adam with bias correction over a fixed set of parameter tensors.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    detail::require(cfg_.lr > 0.0, "Adam: learning rate must be positive");
    detail::require(cfg_.weight_decay >= 0.0, "Adam: weight decay must be >= 0");
    for (const auto& p : params_) {
      detail::require(p.is_leaf() && p.requires_grad(), "Adam: parameters must be trainable leaves");
      first_.push_back(Matrix::Zero(p.rows(), p.cols()));
      second_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    for (const auto& p : params_) {
      detail::require(p.has_grad(), "Adam::step: parameter has no gradient (was backward run?)");
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Matrix& w = params_[i].mutable_value();
      const Matrix g = params_[i].grad() + cfg_.weight_decay * w;
      first_[i] = cfg_.beta1 * first_[i] + (1.0 - cfg_.beta1) * g;
      second_[i] = cfg_.beta2 * second_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const auto m_hat = first_[i].array() / c1;
      const auto v_hat = second_[i].array() / c2;
      w.array() -= cfg_.lr * m_hat / (v_hat.sqrt() + cfg_.eps);
    }
  }

  long steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  long steps_ = 0;
};

}  // namespace stmfg

#endif  // STMFG_OPTIM_HPP
