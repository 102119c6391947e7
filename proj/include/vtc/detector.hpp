#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/ops.hpp"
#include "vtc/rng.hpp"
#include "vtc/text_encoder.hpp"

// Detection head. Each position's inaccuracy score is a learned distance
// between the actual word vector and its reconstruction,
//   D_t = W_d x (x_hat_t/||x_hat_t|| (*) x_t/||x_t||),
// optionally biased by a gated projection of the video feature. Three
// visual modes:
//   off        text-only distance;
//   gated      adds v_t = normalize(W_v x omega) (*) sigmoid(W_g x x_t)
//              inside the distance, so the video shifts exactly the
//              positions whose word vector opens the gate;
//   concat     fuses omega into both vectors first (x' = W_cx x [x|omega],
//              x_hat' = W_cr x [x_hat|omega]) and applies the plain
//              distance to those. Kept as the ablation baseline the gated
//              mode is measured against.

namespace vtc {

enum class VisualMode { off, gated_bias, concat };

inline VisualMode parse_visual_mode(const std::string& s) {
  if (s == "off") return VisualMode::off;
  if (s == "gated") return VisualMode::gated_bias;
  if (s == "concat") return VisualMode::concat;
  throw config_error("unknown visual mode: " + s + " (expected 'off', 'gated', or 'concat')");
}

inline const char* visual_mode_name(VisualMode m) {
  switch (m) {
    case VisualMode::off: return "off";
    case VisualMode::gated_bias: return "gated";
    default: return "concat";
  }
}

struct DetectorConfig {
  int d_x = 64;
  int d_v = 0;  // video feature width; required unless mode is off
  VisualMode mode = VisualMode::off;

  void validate() const {
    if (d_x < 1) throw config_error("detector: d_x must be >= 1");
    if (mode != VisualMode::off && d_v < 1)
      throw config_error("detector: visual modes need d_v >= 1");
  }
};

class Detector {
 public:
  Detector(const DetectorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    w_d_ = detail::init_uniform({1, cfg.d_x}, cfg.d_x, rng);
    if (cfg.mode == VisualMode::gated_bias) {
      w_v_ = detail::init_uniform({cfg.d_x, cfg.d_v}, cfg.d_v, rng);
      w_g_ = detail::init_uniform({cfg.d_x, cfg.d_x}, cfg.d_x, rng);
    } else if (cfg.mode == VisualMode::concat) {
      w_cx_ = detail::init_uniform({cfg.d_x, cfg.d_x + cfg.d_v}, cfg.d_x + cfg.d_v, rng);
      w_cr_ = detail::init_uniform({cfg.d_x, cfg.d_x + cfg.d_v}, cfg.d_x + cfg.d_v, rng);
    }
  }

  const DetectorConfig& config() const { return cfg_; }

  // v_t: the video's additive bias at position t. The gate input is the
  // actual word vector x_t, not the reconstruction. Every coordinate is the
  // product of a unit-vector entry and a sigmoid, so |v_t| <= 1 elementwise.
  Tensor visual_gate_bias(const Tensor& x_t, const Tensor& omega) const {
    if (cfg_.mode != VisualMode::gated_bias)
      throw contract_error("visual_gate_bias: detector is not in gated mode");
    return mul(l2_normalize(matvec(w_v_, omega)), sigmoid(matvec(w_g_, x_t)));
  }

  // D over all positions. omega is required in visual modes and ignored in
  // off mode (the caller decides whether to warn).
  Tensor scores(const Tensor& x, const Tensor& x_hat, const Tensor* omega = nullptr) const {
    detail::require_same_shape("detector::scores", x, x_hat);
    if (x.rank() != 2 || x.dim(1) != cfg_.d_x)
      throw dimension_error("detector::scores: expected [N x d_x] inputs, got " +
                            shape_str(x.shape()));
    if (cfg_.mode != VisualMode::off && omega == nullptr)
      throw contract_error("detector::scores: visual mode needs a video feature");
    const int n = x.dim(0);
    std::vector<Tensor> rows;
    rows.reserve(std::size_t(n));
    for (int t = 0; t < n; ++t) {
      const Tensor xt = row(x, t);
      const Tensor rt = row(x_hat, t);
      Tensor base;
      if (cfg_.mode == VisualMode::concat) {
        const Tensor xt2 = matvec(w_cx_, concat(xt, *omega));
        const Tensor rt2 = matvec(w_cr_, concat(rt, *omega));
        base = mul(l2_normalize(rt2), l2_normalize(xt2));
      } else {
        base = mul(l2_normalize(rt), l2_normalize(xt));
      }
      if (cfg_.mode == VisualMode::gated_bias)
        base = add(base, visual_gate_bias(xt, *omega));
      rows.push_back(base);
    }
    return matvec(stack_rows(rows), row(w_d_, 0));
  }

  template <class F>
  void visit_params(F&& f) {
    f("W_d", w_d_);
    if (cfg_.mode == VisualMode::gated_bias) {
      f("W_v", w_v_);
      f("W_g", w_g_);
    } else if (cfg_.mode == VisualMode::concat) {
      f("W_cx", w_cx_);
      f("W_cr", w_cr_);
    }
  }

 private:
  DetectorConfig cfg_;
  Tensor w_d_;         // [1 x d_x]
  Tensor w_v_, w_g_;   // gated mode
  Tensor w_cx_, w_cr_; // concat mode
};

// ---- selection and loss on raw scores ------------------------------------------

// Argmax with lowest-index tie-break.
inline int detect(const Tensor& d) { return argmax_index(d); }

// Indices of the k largest scores, descending, ties toward smaller index.
inline std::vector<int> detect_k(const Tensor& d, int k) {
  if (d.rank() != 1 || d.dim(0) < 1)
    throw contract_error("detect_k: expects a non-empty score vector");
  const int n = d.dim(0);
  if (k < 1 || k > n)
    throw contract_error("detect_k: k=" + std::to_string(k) + " out of range for n=" +
                         std::to_string(n));
  std::vector<int> order(static_cast<std::size_t>(n), 0);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const float sa = d.data()[std::size_t(a)], sb = d.data()[std::size_t(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  order.resize(std::size_t(k));
  return order;
}

// Cross-entropy of softmax(D) against a one-hot target.
inline Tensor detection_loss(const Tensor& d, const std::vector<float>& y) {
  if (d.rank() != 1 || std::size_t(d.dim(0)) != y.size())
    throw contract_error("detection_loss: score/target length mismatch");
  int hot = -1;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0f) {
      if (hot >= 0) throw contract_error("detection_loss: target is not one-hot");
      hot = int(i);
    } else if (y[i] != 0.0f) {
      throw contract_error("detection_loss: target is not one-hot");
    }
  }
  if (hot < 0) throw contract_error("detection_loss: target is not one-hot");
  return cross_entropy(d, hot);
}

}  // namespace vtc
