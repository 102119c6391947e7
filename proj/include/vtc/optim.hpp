#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/tensor.hpp"

namespace vtc {

enum class OptimizerKind { sgd, sgd_momentum, adam };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "sgd-momentum") return OptimizerKind::sgd_momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw config_error("unknown optimizer: " + s);
}

inline std::string optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sgd_momentum: return "sgd-momentum";
    default: return "adam";
  }
}

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::adam;
  float lr = 1e-3f;
  float momentum = 0.9f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float clip_norm = 0.0f;  // global-norm clip; 0 disables
  bool zero_grad_after_step = true;
};

// Updates exactly the registered trainable tensors; per-parameter state
// buffers mirror the parameter shapes.
class Optimizer {
 public:
  Optimizer(OptimizerOptions opts, std::vector<Tensor> params)
      : opts_(opts), params_(std::move(params)) {
    if (opts_.lr <= 0.0f) throw config_error("optimizer: learning rate must be positive");
    if (opts_.clip_norm < 0.0f) throw config_error("optimizer: clip norm must be >= 0");
    for (const Tensor& p : params_)
      if (!p.defined() || !p.requires_grad())
        throw contract_error("optimizer: all registered parameters must be trainable");
    if (opts_.kind == OptimizerKind::adam) {
      m_.resize(params_.size());
      v_.resize(params_.size());
      for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].size(), 0.0f);
        v_[i].assign(params_[i].size(), 0.0f);
      }
    } else if (opts_.kind == OptimizerKind::sgd_momentum) {
      m_.resize(params_.size());
      for (std::size_t i = 0; i < params_.size(); ++i) m_[i].assign(params_[i].size(), 0.0f);
    }
  }

  const OptimizerOptions& options() const { return opts_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Global gradient norm over all registered parameters.
  double grad_norm() const {
    double ss = 0.0;
    for (const Tensor& p : params_) {
      if (!p.has_grad()) continue;
      for (float g : p.grad()) ss += double(g) * double(g);
    }
    return std::sqrt(ss);
  }

  void step() {
    ++t_;
    float scale = 1.0f;
    if (opts_.clip_norm > 0.0f) {
      const double norm = grad_norm();
      if (norm > double(opts_.clip_norm)) scale = float(double(opts_.clip_norm) / norm);
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad()) continue;
      float* w = p.data();
      const std::vector<float>& g = p.grad();
      switch (opts_.kind) {
        case OptimizerKind::sgd:
          for (std::size_t j = 0; j < g.size(); ++j) w[j] -= opts_.lr * (g[j] * scale);
          break;
        case OptimizerKind::sgd_momentum:
          for (std::size_t j = 0; j < g.size(); ++j) {
            m_[i][j] = opts_.momentum * m_[i][j] + g[j] * scale;
            w[j] -= opts_.lr * m_[i][j];
          }
          break;
        case OptimizerKind::adam: {
          const float c1 = float(1.0 / (1.0 - std::pow(double(opts_.beta1), double(t_))));
          const float c2 = float(1.0 / (1.0 - std::pow(double(opts_.beta2), double(t_))));
          for (std::size_t j = 0; j < g.size(); ++j) {
            const float gj = g[j] * scale;
            m_[i][j] = opts_.beta1 * m_[i][j] + (1.0f - opts_.beta1) * gj;
            v_[i][j] = opts_.beta2 * v_[i][j] + (1.0f - opts_.beta2) * gj * gj;
            const float mhat = m_[i][j] * c1;
            const float vhat = v_[i][j] * c2;
            w[j] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
          }
          break;
        }
      }
    }
    if (opts_.zero_grad_after_step) zero_grad();
  }

  void zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
  }

  long long steps() const { return t_; }

 private:
  OptimizerOptions opts_;
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  long long t_ = 0;
};

}  // namespace vtc
