#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/ops.hpp"
#include "vtc/rng.hpp"
#include "vtc/tensor.hpp"
#include "vtc/text_encoder.hpp"

namespace vtc {

struct CorrectorConfig {
  int d_x = 64;
  int d_q = 128;
  int d_v = 0;
  int beta_size = 0;
  bool visual = false;

  void validate() const {
    if (d_x < 1) throw config_error("corrector: d_x must be >= 1");
    if (d_q < 1) throw config_error("corrector: d_q must be >= 1");
    if (beta_size < 2) throw config_error("corrector: candidate set needs >= 2 words");
    if (visual && d_v < 1) throw config_error("corrector: visual mode needs d_v >= 1");
  }
};

// Picks the replacement word. Reconstruction rows are projected into a query
// space, pooled with the detection distribution, optionally fused with the
// video vector, and scored against a fixed candidate list.
class Corrector {
 public:
  Corrector(const CorrectorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    w_q_ = detail::init_uniform({cfg_.d_q, cfg_.d_x}, cfg_.d_x, rng);
    if (cfg_.visual) w_v_ = detail::init_uniform({cfg_.d_q, cfg_.d_v}, cfg_.d_v, rng);
    w_i_ = detail::init_uniform({cfg_.beta_size, cfg_.d_q}, cfg_.d_q, rng);
  }

  const CorrectorConfig& config() const { return cfg_; }

  // Query row per position: q_t = tanh(W_q * x_hat_t). [N x d_x] -> [N x d_q].
  Tensor encode_candidates(const Tensor& x_hat) const {
    if (x_hat.rank() != 2 || x_hat.dim(1) != cfg_.d_x)
      throw dimension_error("corrector: reconstruction must be [N x " +
                            std::to_string(cfg_.d_x) + "], got " + shape_str(x_hat.shape()));
    const int n = x_hat.dim(0);
    if (n < 1) throw contract_error("corrector: empty reconstruction");
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) rows.push_back(tanh(matvec(w_q_, row(x_hat, t))));
    return stack_rows(rows);
  }

  // Pools query rows with the detection distribution: u_q = sum_t T*_t q_t.
  // t_star must be a probability vector over the same positions.
  Tensor attend(const Tensor& t_star, const Tensor& q) const {
    if (t_star.rank() != 1 || q.rank() != 2 || t_star.dim(0) != q.dim(0))
      throw dimension_error("corrector: attention weights " + shape_str(t_star.shape()) +
                            " do not match query rows " + shape_str(q.shape()));
    if (q.dim(1) != cfg_.d_q)
      throw dimension_error("corrector: query rows must have width " + std::to_string(cfg_.d_q));
    double sum = 0.0;
    for (int t = 0; t < t_star.dim(0); ++t) {
      const float w = t_star.data()[static_cast<std::size_t>(t)];
      if (!std::isfinite(w) || w < 0.0f)
        throw contract_error("corrector: attention weights must be finite and non-negative");
      sum += static_cast<double>(w);
    }
    if (std::abs(sum - 1.0) > 1e-4)
      throw contract_error("corrector: attention weights sum to " + std::to_string(sum) +
                           ", expected 1");
    return vecmat(t_star, q);
  }

  // Video context u_V = tanh(W_V * omega). Only valid on visual configs.
  Tensor encode_video(const Tensor& omega) const {
    if (!cfg_.visual) throw contract_error("corrector: video context on a text-only config");
    if (omega.rank() != 1 || omega.dim(0) != cfg_.d_v)
      throw dimension_error("corrector: video vector must be [" + std::to_string(cfg_.d_v) +
                            "], got " + shape_str(omega.shape()));
    return tanh(matvec(w_v_, omega));
  }

  // Zero context stands in for u_V on text-only configs; same fusion path.
  Tensor zero_video() const { return Tensor::zeros({cfg_.d_q}); }

  // Candidate scores W_i * (u_q + u_V). [beta_size].
  Tensor word_logits(const Tensor& u_q, const Tensor& u_v) const {
    if (u_q.rank() != 1 || u_q.dim(0) != cfg_.d_q || u_v.rank() != 1 || u_v.dim(0) != cfg_.d_q)
      throw dimension_error("corrector: context vectors must be [" + std::to_string(cfg_.d_q) +
                            "]");
    return matvec(w_i_, add(u_q, u_v));
  }

  // Index into the candidate list, lowest index on ties.
  int predict_word(const Tensor& u_q, const Tensor& u_v) const {
    return argmax_index(word_logits(u_q, u_v));
  }

  // Cross entropy against the candidate-list index of the true word.
  Tensor word_loss(const Tensor& logits, int beta_target) const {
    if (logits.rank() != 1 || logits.dim(0) != cfg_.beta_size)
      throw dimension_error("corrector: logits must be [" + std::to_string(cfg_.beta_size) +
                            "]");
    if (beta_target < 0 || beta_target >= cfg_.beta_size)
      throw contract_error("corrector: true word is not in the candidate list");
    return cross_entropy(logits, beta_target);
  }

  // Joint score for every (position, word) pair, row-major [N x beta_size]:
  //   score(t, w) = log T*_t + log softmax(W_i * (q_t + u_V))_w
  // Each position keeps its own query row (no pooling), so the ranking can
  // name position and word together. Values only; log terms use doubles.
  std::vector<double> score_all_pairs(const Tensor& d_scores, const Tensor& x_hat,
                                      const Tensor* omega) const {
    if (d_scores.rank() != 1)
      throw dimension_error("corrector: detection scores must be rank-1");
    if (x_hat.rank() != 2 || d_scores.dim(0) != x_hat.dim(0))
      throw dimension_error("corrector: detection scores and reconstruction disagree on N");
    if (cfg_.visual && omega == nullptr)
      throw contract_error("corrector: visual config needs a video vector");
    if (!cfg_.visual && omega != nullptr)
      throw contract_error("corrector: text-only config given a video vector");
    NoGradGuard guard;
    const int n = d_scores.dim(0);
    const int b = cfg_.beta_size;

    std::vector<double> log_t_star(static_cast<std::size_t>(n), 0.0);
    {
      double mx = -std::numeric_limits<double>::infinity();
      for (int t = 0; t < n; ++t) {
        const float s = d_scores.data()[static_cast<std::size_t>(t)];
        if (!std::isfinite(s)) throw numeric_error("corrector: non-finite detection score");
        mx = std::max(mx, static_cast<double>(s));
      }
      double lse = 0.0;
      for (int t = 0; t < n; ++t)
        lse += std::exp(static_cast<double>(d_scores.data()[static_cast<std::size_t>(t)]) - mx);
      lse = mx + std::log(lse);
      for (int t = 0; t < n; ++t)
        log_t_star[static_cast<std::size_t>(t)] =
            static_cast<double>(d_scores.data()[static_cast<std::size_t>(t)]) - lse;
    }

    const Tensor q = encode_candidates(x_hat);
    const Tensor u_v = cfg_.visual ? encode_video(*omega) : zero_video();

    std::vector<double> scores(static_cast<std::size_t>(n) * static_cast<std::size_t>(b), 0.0);
    for (int t = 0; t < n; ++t) {
      const Tensor logits = word_logits(row(q, t), u_v);
      double mx = -std::numeric_limits<double>::infinity();
      for (int w = 0; w < b; ++w)
        mx = std::max(mx, static_cast<double>(logits.data()[static_cast<std::size_t>(w)]));
      double lse = 0.0;
      for (int w = 0; w < b; ++w)
        lse += std::exp(static_cast<double>(logits.data()[static_cast<std::size_t>(w)]) - mx);
      lse = mx + std::log(lse);
      for (int w = 0; w < b; ++w)
        scores[static_cast<std::size_t>(t) * static_cast<std::size_t>(b) +
               static_cast<std::size_t>(w)] =
            log_t_star[static_cast<std::size_t>(t)] +
            (static_cast<double>(logits.data()[static_cast<std::size_t>(w)]) - lse);
    }
    return scores;
  }

  template <typename Fn>
  void visit_params(Fn&& fn) {
    fn("W_q", w_q_);
    if (cfg_.visual) fn("W_V", w_v_);
    fn("W_i", w_i_);
  }

  Tensor& w_q() { return w_q_; }
  Tensor& w_v() {
    if (!cfg_.visual) throw contract_error("corrector: no video projection on text-only config");
    return w_v_;
  }
  Tensor& w_i() { return w_i_; }

 private:
  CorrectorConfig cfg_;
  Tensor w_q_;
  Tensor w_v_;
  Tensor w_i_;
};

}  // namespace vtc
