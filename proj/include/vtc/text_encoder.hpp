#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/ops.hpp"
#include "vtc/rng.hpp"

// Per-position reconstruction encoder. Two context paths predict each word
// vector from its surroundings: a stack of gated convolutions over the
// position-gated embeddings (short range) and a pair of fragment LSTMs that
// read everything left of t and everything right of t (long range). Their
// sum is the reconstruction the detector compares against the actual word.

namespace vtc {

struct EncoderConfig {
  int vocab_size = 0;
  int d_x = 64;   // embedding width
  int h = 64;     // LSTM hidden width per direction
  int m = 5;      // conv receptive field, odd
  int depth = 3;  // gated conv layers
  int n_max = 40; // longest supported sentence

  void validate() const {
    if (vocab_size < 1) throw config_error("encoder: vocab_size must be >= 1");
    if (d_x < 1 || h < 1) throw config_error("encoder: d_x and h must be >= 1");
    if (m < 1 || m % 2 == 0)
      throw config_error("encoder: receptive field m must be odd and >= 1, got " +
                         std::to_string(m));
    if (depth < 1) throw config_error("encoder: depth must be >= 1");
    if (n_max < 1) throw config_error("encoder: n_max must be >= 1");
  }
};

namespace detail {

inline Tensor init_uniform(const Shape& shape, int fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  const double k = 1.0 / std::sqrt(double(fan_in));
  for (std::size_t i = 0; i < std::size_t(t.size()); ++i)
    t.data()[i] = float(rng.uniform(-k, k));
  t.set_requires_grad(true);
  return t;
}

inline Tensor init_normal(const Shape& shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (std::size_t i = 0; i < std::size_t(t.size()); ++i)
    t.data()[i] = float(rng.normal(0.0, stddev));
  t.set_requires_grad(true);
  return t;
}

}  // namespace detail

// One-layer LSTM cell. Gate layout along the 4h axis is input, forget,
// cell, output; the forget-gate bias starts at 1 so early training does not
// flush the cell state.
struct LstmParams {
  Tensor w_ih;  // [4h x d]
  Tensor w_hh;  // [4h x h]
  Tensor b;     // [4h]
  int d = 0;
  int h = 0;

  static LstmParams init(int d, int h, Rng& rng) {
    LstmParams p;
    p.d = d;
    p.h = h;
    p.w_ih = detail::init_uniform({4 * h, d}, d, rng);
    p.w_hh = detail::init_uniform({4 * h, h}, h, rng);
    p.b = Tensor::zeros({4 * h});
    for (int j = h; j < 2 * h; ++j) p.b.data()[j] = 1.0f;
    p.b.set_requires_grad(true);
    return p;
  }
};

struct LstmState {
  Tensor h;
  Tensor c;
};

inline LstmState lstm_initial_state(int h) {
  return {Tensor::zeros({h}), Tensor::zeros({h})};
}

inline LstmState lstm_step(const LstmParams& p, const Tensor& x, const LstmState& prev) {
  const int h = p.h;
  const Tensor pre = add(add(matvec(p.w_ih, x), matvec(p.w_hh, prev.h)), p.b);
  const Tensor ig = sigmoid(slice(pre, 0, h));
  const Tensor fg = sigmoid(slice(pre, h, 2 * h));
  const Tensor gg = tanh(slice(pre, 2 * h, 3 * h));
  const Tensor og = sigmoid(slice(pre, 3 * h, 4 * h));
  const Tensor c = add(mul(fg, prev.c), mul(ig, gg));
  return {mul(og, tanh(c)), c};
}

struct ConvLayer {
  Tensor kernel;  // [m x d_x x 2 d_x]
  Tensor bias;    // [2 d_x]
};

struct EncodedSentence {
  Tensor x;        // [N x d_x] embedded words
  Tensor x_hat_c;  // conv path reconstruction
  Tensor x_hat_r;  // recurrent path reconstruction
  Tensor x_hat;    // x_hat_c + x_hat_r
};

class TextEncoder {
 public:
  TextEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    // Draw order is fixed (it matches visit_params) so a seed pins every
    // initial weight.
    theta_x_ = detail::init_normal({cfg.vocab_size, cfg.d_x}, 0.1, rng);
    pos_table_ = detail::init_normal({cfg.n_max, cfg.d_x}, 0.1, rng);
    conv_.reserve(std::size_t(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
      ConvLayer layer;
      layer.kernel = detail::init_uniform({cfg.m, cfg.d_x, 2 * cfg.d_x}, cfg.m * cfg.d_x, rng);
      layer.bias = Tensor::zeros({2 * cfg.d_x});
      layer.bias.set_requires_grad(true);
      conv_.push_back(std::move(layer));
    }
    lstm_l_ = LstmParams::init(cfg.d_x, cfg.h, rng);
    lstm_r_ = LstmParams::init(cfg.d_x, cfg.h, rng);
    w_c_ = detail::init_uniform({cfg.d_x, 2 * cfg.h}, 2 * cfg.h, rng);
  }

  const EncoderConfig& config() const { return cfg_; }
  const Tensor& embedding_table() const { return theta_x_; }

  void check_length(std::size_t n) const {
    if (n == 0) throw contract_error("encoder: empty sentence");
    if (int(n) > cfg_.n_max)
      throw contract_error("encoder: sentence length " + std::to_string(n) +
                           " exceeds n_max " + std::to_string(cfg_.n_max));
  }

  Tensor embed(const std::vector<int>& ids) const {
    check_length(ids.size());
    return lookup_rows(theta_x_, ids);
  }

  // I_t = x_t (*) sigmoid(p_t): the position row decides, per coordinate,
  // how much of the word enters the convolution stack.
  Tensor position_gate(const Tensor& x) const {
    check_length(std::size_t(x.dim(0)));
    std::vector<int> positions(std::size_t(x.dim(0)));
    std::iota(positions.begin(), positions.end(), 0);
    return mul(x, sigmoid(lookup_rows(pos_table_, positions)));
  }

  // Conv to 2 d_x channels, then the first half gated by the second:
  // C = [A, B], output = A (*) sigmoid(B). A is columns [0, d_x).
  Tensor glu_layer(const Tensor& in, int layer) const {
    if (layer < 0 || std::size_t(layer) >= conv_.size())
      throw index_error("encoder: conv layer " + std::to_string(layer) + " out of range");
    const Tensor c = conv1d(in, conv_[std::size_t(layer)].kernel, conv_[std::size_t(layer)].bias);
    const Tensor a = cols(c, 0, cfg_.d_x);
    const Tensor b = cols(c, cfg_.d_x, 2 * cfg_.d_x);
    return mul(a, sigmoid(b));
  }

  Tensor conv_ngram(const Tensor& x) const {
    Tensor cur = position_gate(x);
    for (int i = 0; i < cfg_.depth; ++i) cur = glu_layer(cur, i);
    return cur;
  }

  // Fragment reconstruction: position t is predicted from the left LSTM run
  // over words 0..t-1 and the right LSTM run over words N-1..t+1 (reverse
  // order). Both sweeps are single passes with every prefix/suffix state
  // cached; an empty fragment contributes the zero state.
  Tensor reconstruct_recurrent(const Tensor& x) const {
    const int n = x.dim(0);
    check_length(std::size_t(n));
    std::vector<Tensor> u_l(static_cast<std::size_t>(n));
    std::vector<Tensor> u_r(static_cast<std::size_t>(n));
    LstmState st = lstm_initial_state(cfg_.h);
    for (int t = 0; t < n; ++t) {
      u_l[std::size_t(t)] = st.h;
      st = lstm_step(lstm_l_, row(x, t), st);
    }
    st = lstm_initial_state(cfg_.h);
    for (int t = n - 1; t >= 0; --t) {
      u_r[std::size_t(t)] = st.h;
      st = lstm_step(lstm_r_, row(x, t), st);
    }
    std::vector<Tensor> rows;
    rows.reserve(std::size_t(n));
    for (int t = 0; t < n; ++t)
      rows.push_back(matvec(w_c_, concat(u_l[std::size_t(t)], u_r[std::size_t(t)])));
    return stack_rows(rows);
  }

  static Tensor fuse(const Tensor& x_hat_c, const Tensor& x_hat_r) {
    return add(x_hat_c, x_hat_r);
  }

  // Either path can be switched off to study it in isolation; the fused
  // reconstruction is then just the remaining path.
  EncodedSentence encode(const std::vector<int>& ids, bool with_conv = true,
                         bool with_lstm = true) const {
    if (!with_conv && !with_lstm)
      throw contract_error("encoder: at least one reconstruction path must be enabled");
    EncodedSentence e;
    e.x = embed(ids);
    if (with_conv) e.x_hat_c = conv_ngram(e.x);
    if (with_lstm) e.x_hat_r = reconstruct_recurrent(e.x);
    if (with_conv && with_lstm)
      e.x_hat = fuse(e.x_hat_c, e.x_hat_r);
    else
      e.x_hat = with_conv ? e.x_hat_c : e.x_hat_r;
    return e;
  }

  // Canonical parameter order; checkpoints and optimizers both rely on it.
  template <class F>
  void visit_params(F&& f) {
    f("theta_x", theta_x_);
    f("pos_table", pos_table_);
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      const std::string prefix = "conv." + std::to_string(i);
      f(prefix + ".kernel", conv_[i].kernel);
      f(prefix + ".bias", conv_[i].bias);
    }
    f("lstm_l.w_ih", lstm_l_.w_ih);
    f("lstm_l.w_hh", lstm_l_.w_hh);
    f("lstm_l.b", lstm_l_.b);
    f("lstm_r.w_ih", lstm_r_.w_ih);
    f("lstm_r.w_hh", lstm_r_.w_hh);
    f("lstm_r.b", lstm_r_.b);
    f("W_c", w_c_);
  }

  // Test access: the fragment cells, for oracle comparison.
  const LstmParams& left_lstm() const { return lstm_l_; }
  const LstmParams& right_lstm() const { return lstm_r_; }
  const Tensor& w_c() const { return w_c_; }
  const Tensor& pos_table() const { return pos_table_; }
  ConvLayer& conv_layer(int i) { return conv_[std::size_t(i)]; }

 private:
  EncoderConfig cfg_;
  Tensor theta_x_;
  Tensor pos_table_;
  std::vector<ConvLayer> conv_;
  LstmParams lstm_l_, lstm_r_;
  Tensor w_c_;
};

}  // namespace vtc
