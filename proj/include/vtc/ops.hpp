#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vtc/errors.hpp"
#include "vtc/tensor.hpp"

// Eager tensor ops. Forward values are computed at call time; when gradient
// mode is on and an input is trainable, a backprop closure is attached that
// scatters the output gradient into the inputs.
//
// Conventions:
//  - elementwise ops accept equal shapes, or one scalar (size-1) operand;
//  - reductions that feed exp/log (softmax, cross_entropy, l2_normalize)
//    accumulate in double for stability; linear ops accumulate in float in
//    a fixed loop order, which the straight-line oracle tests mirror.

namespace vtc {

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw dimension_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
}

inline bool is_scalar(const Tensor& t) { return t.size() == 1; }

inline float stable_sigmoid(float x) {
  if (x >= 0.0f) {
    const float z = std::exp(-x);
    return 1.0f / (1.0f + z);
  }
  const float z = std::exp(x);
  return z / (1.0f + z);
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() && !detail::is_scalar(a) && !detail::is_scalar(b))
    detail::require_same_shape("add", a, b);
  const bool sa = detail::is_scalar(a) && a.shape() != b.shape();
  const bool sb = detail::is_scalar(b) && a.shape() != b.shape();
  Tensor out = Tensor::result(sa ? b.shape() : a.shape(), {a, b});
  const std::size_t n = out.size();
  const float* av = a.data();
  const float* bv = b.data();
  float* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = (sa ? av[0] : av[i]) + (sb ? bv[0] : bv[i]);
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* na = a.node().get();
    auto* nb = b.node().get();
    out.node()->backprop = [self, na, nb, sa, sb, n] {
      if (na->requires_grad)
        for (std::size_t i = 0; i < n; ++i) na->grad[sa ? 0 : i] += self->grad[i];
      if (nb->requires_grad)
        for (std::size_t i = 0; i < n; ++i) nb->grad[sb ? 0 : i] += self->grad[i];
    };
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() && !detail::is_scalar(a) && !detail::is_scalar(b))
    detail::require_same_shape("sub", a, b);
  const bool sa = detail::is_scalar(a) && a.shape() != b.shape();
  const bool sb = detail::is_scalar(b) && a.shape() != b.shape();
  Tensor out = Tensor::result(sa ? b.shape() : a.shape(), {a, b});
  const std::size_t n = out.size();
  const float* av = a.data();
  const float* bv = b.data();
  float* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = (sa ? av[0] : av[i]) - (sb ? bv[0] : bv[i]);
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* na = a.node().get();
    auto* nb = b.node().get();
    out.node()->backprop = [self, na, nb, sa, sb, n] {
      if (na->requires_grad)
        for (std::size_t i = 0; i < n; ++i) na->grad[sa ? 0 : i] += self->grad[i];
      if (nb->requires_grad)
        for (std::size_t i = 0; i < n; ++i) nb->grad[sb ? 0 : i] -= self->grad[i];
    };
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() && !detail::is_scalar(a) && !detail::is_scalar(b))
    detail::require_same_shape("mul", a, b);
  const bool sa = detail::is_scalar(a) && a.shape() != b.shape();
  const bool sb = detail::is_scalar(b) && a.shape() != b.shape();
  Tensor out = Tensor::result(sa ? b.shape() : a.shape(), {a, b});
  const std::size_t n = out.size();
  const float* av = a.data();
  const float* bv = b.data();
  float* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = (sa ? av[0] : av[i]) * (sb ? bv[0] : bv[i]);
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* na = a.node().get();
    auto* nb = b.node().get();
    out.node()->backprop = [self, na, nb, sa, sb, n] {
      if (na->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          na->grad[sa ? 0 : i] += self->grad[i] * nb->value[sb ? 0 : i];
      if (nb->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          nb->grad[sb ? 0 : i] += self->grad[i] * na->value[sa ? 0 : i];
    };
  }
  return out;
}

inline Tensor scale(const Tensor& a, float c) {
  Tensor out = Tensor::result(a.shape(), {a});
  const std::size_t n = out.size();
  const float* av = a.data();
  float* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * c;
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* na = a.node().get();
    out.node()->backprop = [self, na, c, n] {
      for (std::size_t i = 0; i < n; ++i) na->grad[i] += self->grad[i] * c;
    };
  }
  return out;
}

inline Tensor sigmoid(const Tensor& a) {
  Tensor out = Tensor::result(a.shape(), {a});
  const std::size_t n = out.size();
  const float* av = a.data();
  float* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = detail::stable_sigmoid(av[i]);
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* na = a.node().get();
    out.node()->backprop = [self, na, n] {
      for (std::size_t i = 0; i < n; ++i) {
        const float y = self->value[i];
        na->grad[i] += self->grad[i] * y * (1.0f - y);
      }
    };
  }
  return out;
}

inline Tensor tanh(const Tensor& a) {
  Tensor out = Tensor::result(a.shape(), {a});
  const std::size_t n = out.size();
  const float* av = a.data();
  float* ov = out.data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = std::tanh(av[i]);
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* na = a.node().get();
    out.node()->backprop = [self, na, n] {
      for (std::size_t i = 0; i < n; ++i) {
        const float y = self->value[i];
        na->grad[i] += self->grad[i] * (1.0f - y * y);
      }
    };
  }
  return out;
}

// ---- linear algebra ---------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw dimension_error("matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                          " and " + shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw dimension_error("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
  const int r = a.dim(0), s = a.dim(1), c = b.dim(1);
  Tensor out = Tensor::result({r, c}, {a, b});
  const float* av = a.data();
  const float* bv = b.data();
  float* ov = out.data();
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < s; ++k) {
      const float aik = av[i * s + k];
      if (aik == 0.0f) continue;
      const float* brow = bv + k * c;
      float* orow = ov + i * c;
      for (int j = 0; j < c; ++j) orow[j] += aik * brow[j];
    }
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* na = a.node().get();
    auto* nb = b.node().get();
    out.node()->backprop = [self, na, nb, r, s, c] {
      if (na->requires_grad)
        for (int i = 0; i < r; ++i)
          for (int k = 0; k < s; ++k) {
            float acc = 0.0f;
            const float* brow = nb->value.data() + k * c;
            const float* grow = self->grad.data() + i * c;
            for (int j = 0; j < c; ++j) acc += grow[j] * brow[j];
            na->grad[i * s + k] += acc;
          }
      if (nb->requires_grad)
        for (int i = 0; i < r; ++i)
          for (int k = 0; k < s; ++k) {
            const float aik = na->value[i * s + k];
            if (aik == 0.0f) continue;
            const float* grow = self->grad.data() + i * c;
            float* bgrow = nb->grad.data() + k * c;
            for (int j = 0; j < c; ++j) bgrow[j] += aik * grow[j];
          }
    };
  }
  return out;
}

// W[r x c] * v[c] -> [r]
inline Tensor matvec(const Tensor& w, const Tensor& v) {
  if (w.rank() != 2 || v.rank() != 1)
    throw dimension_error("matvec: expects matrix and vector, got " + shape_str(w.shape()) +
                          " and " + shape_str(v.shape()));
  if (w.dim(1) != v.dim(0))
    throw dimension_error("matvec: " + shape_str(w.shape()) + " incompatible with " +
                          shape_str(v.shape()));
  const int r = w.dim(0), c = w.dim(1);
  Tensor out = Tensor::result({r}, {w, v});
  const float* wv = w.data();
  const float* vv = v.data();
  float* ov = out.data();
  for (int i = 0; i < r; ++i) {
    float acc = 0.0f;
    const float* row = wv + i * c;
    for (int j = 0; j < c; ++j) acc += row[j] * vv[j];
    ov[i] = acc;
  }
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nw = w.node().get();
    auto* nv = v.node().get();
    out.node()->backprop = [self, nw, nv, r, c] {
      if (nw->requires_grad)
        for (int i = 0; i < r; ++i) {
          const float g = self->grad[i];
          if (g == 0.0f) continue;
          float* row = nw->grad.data() + i * c;
          for (int j = 0; j < c; ++j) row[j] += g * nv->value[j];
        }
      if (nv->requires_grad)
        for (int i = 0; i < r; ++i) {
          const float g = self->grad[i];
          if (g == 0.0f) continue;
          const float* row = nw->value.data() + i * c;
          for (int j = 0; j < c; ++j) nv->grad[j] += g * row[j];
        }
    };
  }
  return out;
}

// v[r] * W[r x c] -> [c]; the attention pooling primitive.
inline Tensor vecmat(const Tensor& v, const Tensor& w) {
  if (v.rank() != 1 || w.rank() != 2)
    throw dimension_error("vecmat: expects vector and matrix, got " + shape_str(v.shape()) +
                          " and " + shape_str(w.shape()));
  if (v.dim(0) != w.dim(0))
    throw dimension_error("vecmat: " + shape_str(v.shape()) + " incompatible with " +
                          shape_str(w.shape()));
  const int r = w.dim(0), c = w.dim(1);
  Tensor out = Tensor::result({c}, {v, w});
  const float* vv = v.data();
  const float* wv = w.data();
  float* ov = out.data();
  for (int i = 0; i < r; ++i) {
    const float vi = vv[i];
    if (vi == 0.0f) continue;
    const float* row = wv + i * c;
    for (int j = 0; j < c; ++j) ov[j] += vi * row[j];
  }
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nv = v.node().get();
    auto* nw = w.node().get();
    out.node()->backprop = [self, nv, nw, r, c] {
      if (nv->requires_grad)
        for (int i = 0; i < r; ++i) {
          float acc = 0.0f;
          const float* row = nw->value.data() + i * c;
          for (int j = 0; j < c; ++j) acc += row[j] * self->grad[j];
          nv->grad[i] += acc;
        }
      if (nw->requires_grad)
        for (int i = 0; i < r; ++i) {
          const float vi = nv->value[i];
          if (vi == 0.0f) continue;
          float* row = nw->grad.data() + i * c;
          for (int j = 0; j < c; ++j) row[j] += vi * self->grad[j];
        }
    };
  }
  return out;
}

inline Tensor transpose(const Tensor& m) {
  if (m.rank() != 2)
    throw dimension_error("transpose: expects rank-2, got " + shape_str(m.shape()));
  const int r = m.dim(0), c = m.dim(1);
  Tensor out = Tensor::result({c, r}, {m});
  const float* mv = m.data();
  float* ov = out.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) ov[j * r + i] = mv[i * c + j];
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nm = m.node().get();
    out.node()->backprop = [self, nm, r, c] {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) nm->grad[i * c + j] += self->grad[j * r + i];
    };
  }
  return out;
}

// 1-D convolution over the sequence axis with zero padding, odd receptive
// field. x[N x d_in], kernel[m x d_in x d_out], bias[d_out] -> [N x d_out].
inline Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 2 || kernel.rank() != 3 || bias.rank() != 1)
    throw dimension_error("conv1d: expects [NxD], [mxDxO], [O], got " +
                          shape_str(x.shape()) + ", " + shape_str(kernel.shape()) + ", " +
                          shape_str(bias.shape()));
  const int n = x.dim(0), d_in = x.dim(1);
  const int m = kernel.dim(0), d_out = kernel.dim(2);
  if (m % 2 == 0)
    throw config_error("conv1d: receptive field must be odd, got " + std::to_string(m));
  if (kernel.dim(1) != d_in)
    throw dimension_error("conv1d: kernel " + shape_str(kernel.shape()) +
                          " does not match input " + shape_str(x.shape()));
  if (bias.dim(0) != d_out)
    throw dimension_error("conv1d: bias " + shape_str(bias.shape()) +
                          " does not match kernel " + shape_str(kernel.shape()));
  const int pad = (m - 1) / 2;
  Tensor out = Tensor::result({n, d_out}, {x, kernel, bias});
  const float* xv = x.data();
  const float* kv = kernel.data();
  const float* bv = bias.data();
  float* ov = out.data();
  for (int t = 0; t < n; ++t) {
    float* orow = ov + t * d_out;
    for (int o = 0; o < d_out; ++o) orow[o] = bv[o];
    for (int j = 0; j < m; ++j) {
      const int s = t + j - pad;
      if (s < 0 || s >= n) continue;
      const float* xrow = xv + s * d_in;
      for (int i = 0; i < d_in; ++i) {
        const float xi = xrow[i];
        if (xi == 0.0f) continue;
        const float* krow = kv + (j * d_in + i) * d_out;
        for (int o = 0; o < d_out; ++o) orow[o] += xi * krow[o];
      }
    }
  }
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nx = x.node().get();
    auto* nk = kernel.node().get();
    auto* nb = bias.node().get();
    out.node()->backprop = [self, nx, nk, nb, n, d_in, d_out, m, pad] {
      if (nb->requires_grad)
        for (int t = 0; t < n; ++t)
          for (int o = 0; o < d_out; ++o) nb->grad[o] += self->grad[t * d_out + o];
      for (int t = 0; t < n; ++t) {
        const float* grow = self->grad.data() + t * d_out;
        for (int j = 0; j < m; ++j) {
          const int s = t + j - pad;
          if (s < 0 || s >= n) continue;
          for (int i = 0; i < d_in; ++i) {
            const std::size_t kbase = std::size_t(j * d_in + i) * std::size_t(d_out);
            if (nk->requires_grad) {
              const float xi = nx->value[s * d_in + i];
              if (xi != 0.0f)
                for (int o = 0; o < d_out; ++o) nk->grad[kbase + o] += xi * grow[o];
            }
            if (nx->requires_grad) {
              float acc = 0.0f;
              for (int o = 0; o < d_out; ++o) acc += nk->value[kbase + o] * grow[o];
              nx->grad[s * d_in + i] += acc;
            }
          }
        }
      }
    };
  }
  return out;
}

// ---- normalizations and losses ---------------------------------------------

inline Tensor softmax(const Tensor& v) {
  if (v.rank() != 1)
    throw dimension_error("softmax: expects rank-1, got " + shape_str(v.shape()));
  const int n = v.dim(0);
  const float* vv = v.data();
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(vv[i]))
      throw numeric_error("softmax: input entry " + std::to_string(i) + " is not finite");
  Tensor out = Tensor::result(v.shape(), {v});
  float mx = vv[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, vv[i]);
  double z = 0.0;
  float* ov = out.data();
  for (int i = 0; i < n; ++i) {
    ov[i] = std::exp(vv[i] - mx);
    z += double(ov[i]);
  }
  const float inv = float(1.0 / z);
  for (int i = 0; i < n; ++i) ov[i] *= inv;
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nv = v.node().get();
    out.node()->backprop = [self, nv, n] {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += double(self->grad[i]) * double(self->value[i]);
      const float d = float(dot);
      for (int i = 0; i < n; ++i)
        nv->grad[i] += self->value[i] * (self->grad[i] - d);
    };
  }
  return out;
}

// v / ||v||_2, with the zero vector mapped to zero (guard eps = 1e-8).
inline Tensor l2_normalize(const Tensor& v) {
  if (v.rank() != 1)
    throw dimension_error("l2_normalize: expects rank-1, got " + shape_str(v.shape()));
  const int n = v.dim(0);
  const float* vv = v.data();
  double ss = 0.0;
  for (int i = 0; i < n; ++i) ss += double(vv[i]) * double(vv[i]);
  const float norm = float(std::sqrt(ss));
  Tensor out = Tensor::result(v.shape(), {v});
  float* ov = out.data();
  const bool degenerate = norm < 1e-8f;
  if (!degenerate)
    for (int i = 0; i < n; ++i) ov[i] = vv[i] / norm;
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nv = v.node().get();
    out.node()->backprop = [self, nv, n, norm, degenerate] {
      if (degenerate) return;
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += double(self->grad[i]) * double(self->value[i]);
      const float d = float(dot);
      for (int i = 0; i < n; ++i)
        nv->grad[i] += (self->grad[i] - self->value[i] * d) / norm;
    };
  }
  return out;
}

// Cross-entropy of a logit vector against a class index, computed in log
// space: lse(logits) - logits[target].
inline Tensor cross_entropy(const Tensor& logits, int target) {
  if (logits.rank() != 1)
    throw dimension_error("cross_entropy: expects rank-1 logits, got " +
                          shape_str(logits.shape()));
  const int n = logits.dim(0);
  if (target < 0 || target >= n)
    throw index_error("cross_entropy: target " + std::to_string(target) +
                      " out of range for " + std::to_string(n) + " classes");
  const float* lv = logits.data();
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(lv[i]))
      throw numeric_error("cross_entropy: logit " + std::to_string(i) + " is not finite");
  float mx = lv[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, lv[i]);
  double z = 0.0;
  std::vector<float> probs(static_cast<std::size_t>(n), 0.0f);
  for (int i = 0; i < n; ++i) {
    probs[std::size_t(i)] = std::exp(lv[i] - mx);
    z += double(probs[std::size_t(i)]);
  }
  const float invz = float(1.0 / z);
  for (int i = 0; i < n; ++i) probs[std::size_t(i)] *= invz;
  const float loss = float(double(mx) + std::log(z) - double(lv[target]));
  Tensor out = Tensor::result({1}, {logits});
  out.data()[0] = loss;
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nl = logits.node().get();
    out.node()->backprop = [self, nl, n, target, probs = std::move(probs)] {
      const float g = self->grad[0];
      for (int i = 0; i < n; ++i)
        nl->grad[i] += g * (probs[std::size_t(i)] - (i == target ? 1.0f : 0.0f));
    };
  }
  return out;
}

// ---- structural ops ----------------------------------------------------------

inline Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1)
    throw dimension_error("concat: expects rank-1 operands, got " + shape_str(a.shape()) +
                          " and " + shape_str(b.shape()));
  const int p = a.dim(0), q = b.dim(0);
  Tensor out = Tensor::result({p + q}, {a, b});
  float* ov = out.data();
  const float* av = a.data();
  const float* bv = b.data();
  for (int i = 0; i < p; ++i) ov[i] = av[i];
  for (int i = 0; i < q; ++i) ov[p + i] = bv[i];
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* na = a.node().get();
    auto* nb = b.node().get();
    out.node()->backprop = [self, na, nb, p, q] {
      if (na->requires_grad)
        for (int i = 0; i < p; ++i) na->grad[i] += self->grad[i];
      if (nb->requires_grad)
        for (int i = 0; i < q; ++i) nb->grad[i] += self->grad[p + i];
    };
  }
  return out;
}

inline Tensor slice(const Tensor& v, int from, int to) {
  if (v.rank() != 1)
    throw dimension_error("slice: expects rank-1, got " + shape_str(v.shape()));
  if (from < 0 || to > v.dim(0) || from >= to)
    throw index_error("slice: range [" + std::to_string(from) + ", " + std::to_string(to) +
                      ") invalid for length " + std::to_string(v.dim(0)));
  const int n = to - from;
  Tensor out = Tensor::result({n}, {v});
  const float* vv = v.data();
  float* ov = out.data();
  for (int i = 0; i < n; ++i) ov[i] = vv[from + i];
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nv = v.node().get();
    out.node()->backprop = [self, nv, from, n] {
      for (int i = 0; i < n; ++i) nv->grad[from + i] += self->grad[i];
    };
  }
  return out;
}

// Column block m[:, from:to].
inline Tensor cols(const Tensor& m, int from, int to) {
  if (m.rank() != 2)
    throw dimension_error("cols: expects rank-2, got " + shape_str(m.shape()));
  if (from < 0 || to > m.dim(1) || from >= to)
    throw index_error("cols: range [" + std::to_string(from) + ", " + std::to_string(to) +
                      ") invalid for width " + std::to_string(m.dim(1)));
  const int r = m.dim(0), c = m.dim(1), w = to - from;
  Tensor out = Tensor::result({r, w}, {m});
  const float* mv = m.data();
  float* ov = out.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j) ov[i * w + j] = mv[i * c + from + j];
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nm = m.node().get();
    out.node()->backprop = [self, nm, r, c, w, from] {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) nm->grad[i * c + from + j] += self->grad[i * w + j];
    };
  }
  return out;
}

inline Tensor row(const Tensor& m, int r) {
  if (m.rank() != 2)
    throw dimension_error("row: expects rank-2, got " + shape_str(m.shape()));
  if (r < 0 || r >= m.dim(0))
    throw index_error("row: index " + std::to_string(r) + " out of range for " +
                      std::to_string(m.dim(0)) + " rows");
  const int c = m.dim(1);
  Tensor out = Tensor::result({c}, {m});
  const float* mv = m.data() + std::size_t(r) * std::size_t(c);
  float* ov = out.data();
  for (int j = 0; j < c; ++j) ov[j] = mv[j];
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nm = m.node().get();
    out.node()->backprop = [self, nm, r, c] {
      for (int j = 0; j < c; ++j) nm->grad[std::size_t(r) * std::size_t(c) + j] += self->grad[j];
    };
  }
  return out;
}

// Row gather from an embedding table; gradient scatter-adds, so repeated ids
// accumulate.
inline Tensor lookup_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw dimension_error("lookup_rows: expects rank-2 table, got " + shape_str(table.shape()));
  if (ids.empty()) throw contract_error("lookup_rows: empty id list");
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw index_error("lookup_rows: id " + std::to_string(id) + " out of range for " +
                        std::to_string(v) + " rows");
  const int n = int(ids.size());
  Tensor out = Tensor::result({n, d}, {table});
  const float* tv = table.data();
  float* ov = out.data();
  for (int i = 0; i < n; ++i) {
    const float* src = tv + std::size_t(ids[std::size_t(i)]) * std::size_t(d);
    float* dst = ov + std::size_t(i) * std::size_t(d);
    for (int j = 0; j < d; ++j) dst[j] = src[j];
  }
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nt = table.node().get();
    out.node()->backprop = [self, nt, ids, n, d] {
      for (int i = 0; i < n; ++i) {
        float* dst = nt->grad.data() + std::size_t(ids[std::size_t(i)]) * std::size_t(d);
        const float* src = self->grad.data() + std::size_t(i) * std::size_t(d);
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw contract_error("stack_rows: empty row list");
  const int d = rows[0].dim(0);
  for (const Tensor& t : rows) {
    if (t.rank() != 1)
      throw dimension_error("stack_rows: expects rank-1 rows, got " + shape_str(t.shape()));
    if (t.dim(0) != d)
      throw dimension_error("stack_rows: row width mismatch, " + shape_str(t.shape()) +
                            " vs [" + std::to_string(d) + "]");
  }
  const int n = int(rows.size());
  Tensor out = Tensor::result({n, d}, rows);
  float* ov = out.data();
  for (int i = 0; i < n; ++i) {
    const float* src = rows[std::size_t(i)].data();
    for (int j = 0; j < d; ++j) ov[std::size_t(i) * std::size_t(d) + j] = src[j];
  }
  if (out.requires_grad()) {
    auto* self = out.node().get();
    std::vector<detail::Node*> inputs;
    inputs.reserve(rows.size());
    for (const Tensor& t : rows) inputs.push_back(t.node().get());
    out.node()->backprop = [self, inputs = std::move(inputs), d] {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!inputs[i]->requires_grad) continue;
        const float* src = self->grad.data() + i * std::size_t(d);
        for (int j = 0; j < d; ++j) inputs[i]->grad[j] += src[j];
      }
    };
  }
  return out;
}

// Index of the largest value, lowest index on ties. Values only; no graph.
inline int argmax_index(const Tensor& v) {
  if (v.rank() != 1 || v.dim(0) < 1)
    throw contract_error("argmax_index: expects a non-empty vector");
  int best = 0;
  for (int i = 1; i < v.dim(0); ++i)
    if (v.data()[std::size_t(i)] > v.data()[std::size_t(best)]) best = i;
  return best;
}

inline Tensor sum(const Tensor& t) {
  Tensor out = Tensor::result({1}, {t});
  const std::size_t n = t.size();
  const float* tv = t.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += double(tv[i]);
  out.data()[0] = float(acc);
  if (out.requires_grad()) {
    auto* self = out.node().get();
    auto* nt = t.node().get();
    out.node()->backprop = [self, nt, n] {
      const float g = self->grad[0];
      for (std::size_t i = 0; i < n; ++i) nt->grad[i] += g;
    };
  }
  return out;
}

}  // namespace vtc
