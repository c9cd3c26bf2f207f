#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "pulsar/errors.hpp"
#include "pulsar/gemm.hpp"
#include "pulsar/rng.hpp"
#include "pulsar/tensor.hpp"

namespace pulsar {

// Which activations a batch-norm layer treats as one feature.
enum class BnLayout {
  PerChannel,        // stats over (N, T, V); one feature per channel
  PerChannelVertex,  // stats over (N, T); one feature per (channel, vertex)
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Reverse-mode tape. Every primitive computes its forward value eagerly,
// verifies the output is finite, and records an adjoint closure when gradients
// can flow. backward() replays the closures exactly once in reverse order.
// Dropout masks come from the tape's own seeded generator.
template <class S>
class TapeT {
 public:
  explicit TapeT(std::uint64_t seed = 0, bool grad_enabled = true)
      : rng_(seed), grad_enabled_(grad_enabled) {}

  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool v) { grad_enabled_ = v; }
  std::size_t recorded_ops() const { return recs_.size(); }

  // ---- elementwise ----

  TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) { return ewise("add", a, b, [](S x, S y) { return x + y; }, S(1), S(1)); }
  TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) { return ewise("sub", a, b, [](S x, S y) { return x - y; }, S(1), S(-1)); }

  TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape("mul", a, b);
    TensorT<S> out(a.shape());
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
    finish("mul", out);
    if (should_record({&a, &b})) {
      int ia = node_of(a), ib = node_of(b), io = make_node(out);
      record("mul", {ia, ib}, io, [this, a, b, ia, ib, io] {
        const std::vector<S>& gy = grads_[io];
        if (ia >= 0) {
          S* ga = grads_[ia].data();
          const S* pb2 = b.data();
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * pb2[i];
        }
        if (ib >= 0) {
          S* gb = grads_[ib].data();
          const S* pa2 = a.data();
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * pa2[i];
        }
      });
    }
    return out;
  }

  TensorT<S> scale(const TensorT<S>& x, double c) {
    TensorT<S> out(x.shape());
    const S* px = x.data();
    S* po = out.data();
    const S cs = static_cast<S>(c);
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = cs * px[i];
    finish("scale", out);
    if (should_record({&x})) {
      int ix = node_of(x), io = make_node(out);
      record("scale", {ix}, io, [this, ix, io, cs] {
        if (ix < 0) return;
        const std::vector<S>& gy = grads_[io];
        S* gx = grads_[ix].data();
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += cs * gy[i];
      });
    }
    return out;
  }

  TensorT<S> relu(const TensorT<S>& x) {
    TensorT<S> out(x.shape());
    const S* px = x.data();
    S* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = px[i] > S(0) ? px[i] : S(0);
    finish("relu", out);
    if (should_record({&x})) {
      int ix = node_of(x), io = make_node(out);
      record("relu", {ix}, io, [this, x, ix, io] {
        if (ix < 0) return;
        const std::vector<S>& gy = grads_[io];
        const S* px2 = x.data();
        S* gx = grads_[ix].data();
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (px2[i] > S(0)) gx[i] += gy[i];
      });
    }
    return out;
  }

  // Inverted dropout: train-time scaling by 1/(1-p), eval is the identity.
  TensorT<S> dropout(const TensorT<S>& x, double p, bool train) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0,1)");
    if (!train || p == 0.0) return x;
    std::vector<S> mask(x.size());
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng_.uniform() < p ? S(0) : keep_scale;
    TensorT<S> out(x.shape());
    const S* px = x.data();
    S* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = px[i] * mask[i];
    finish("dropout", out);
    if (should_record({&x})) {
      int ix = node_of(x), io = make_node(out);
      record("dropout", {ix}, io, [this, ix, io, mask = std::move(mask)] {
        if (ix < 0) return;
        const std::vector<S>& gy = grads_[io];
        S* gx = grads_[ix].data();
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
      });
    }
    return out;
  }

  // softmax along `axis`; slices normalize to 1
  TensorT<S> softmax(const TensorT<S>& x, int axis) {
    if (axis < 0) axis += x.ndim();
    if (axis < 0 || axis >= x.ndim()) throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    const auto [outer, len, inner] = slice_geometry(x.shape(), axis);
    TensorT<S> out(x.shape());
    const S* px = x.data();
    S* po = out.data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        S mx = px[base];
        for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, px[base + l * inner]);
        double denom = 0.0;
        for (std::size_t l = 0; l < len; ++l) denom += std::exp(static_cast<double>(px[base + l * inner] - mx));
        for (std::size_t l = 0; l < len; ++l)
          po[base + l * inner] = static_cast<S>(std::exp(static_cast<double>(px[base + l * inner] - mx)) / denom);
      }
    finish("softmax", out);
    if (should_record({&x})) {
      int ix = node_of(x), io = make_node(out);
      record("softmax", {ix}, io, [this, out, ix, io, outer, len, inner] {
        if (ix < 0) return;
        const std::vector<S>& gy = grads_[io];
        const S* py = out.data();
        S* gx = grads_[ix].data();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t l = 0; l < len; ++l) dot += static_cast<double>(gy[base + l * inner]) * py[base + l * inner];
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t i = base + l * inner;
              gx[i] += py[i] * (gy[i] - static_cast<S>(dot));
            }
          }
      });
    }
    return out;
  }

  // ---- linear algebra ----

  TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
      throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorT<S> out(Shape{m, n});
    detail::gemm(false, false, m, n, k, S(1), a.data(), k, b.data(), n, S(0), out.data(), n);
    finish("matmul", out);
    if (should_record({&a, &b})) {
      int ia = node_of(a), ib = node_of(b), io = make_node(out);
      record("matmul", {ia, ib}, io, [this, a, b, ia, ib, io, m, k, n] {
        const S* gy = grads_[io].data();
        if (ia >= 0) detail::gemm(false, true, m, k, n, S(1), gy, n, b.data(), n, S(1), grads_[ia].data(), k);
        if (ib >= 0) detail::gemm(true, false, k, n, m, S(1), a.data(), k, gy, n, S(1), grads_[ib].data(), n);
      });
    }
    return out;
  }

  // x: N x F, w: F x O, b: O
  TensorT<S> affine(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1 || x.dim(1) != w.dim(0) || w.dim(1) != b.dim(0))
      throw ShapeError("affine: incompatible shapes " + shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " + shape_str(b.shape()));
    const int n = x.dim(0), f = x.dim(1), o = w.dim(1);
    TensorT<S> out(Shape{n, o});
    S* po = out.data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < o; ++j) po[static_cast<std::size_t>(i) * o + j] = b.data()[j];
    detail::gemm(false, false, n, o, f, S(1), x.data(), f, w.data(), o, S(1), po, o);
    finish("affine", out);
    if (should_record({&x, &w, &b})) {
      int ix = node_of(x), iw = node_of(w), ib = node_of(b), io = make_node(out);
      record("affine", {ix, iw, ib}, io, [this, x, w, ix, iw, ib, io, n, f, o] {
        const S* gy = grads_[io].data();
        if (ix >= 0) detail::gemm(false, true, n, f, o, S(1), gy, o, w.data(), o, S(1), grads_[ix].data(), f);
        if (iw >= 0) detail::gemm(true, false, f, o, n, S(1), x.data(), f, gy, o, S(1), grads_[iw].data(), o);
        if (ib >= 0) {
          S* gb = grads_[ib].data();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < o; ++j) gb[j] += gy[static_cast<std::size_t>(i) * o + j];
        }
      });
    }
    return out;
  }

  // 1x1 channel convolution: x N x Cin x T x V, w Cout x Cin, optional bias Cout.
  TensorT<S> conv1x1(const TensorT<S>& x, const TensorT<S>& w) { return conv1x1_impl(x, w, nullptr); }
  TensorT<S> conv1x1(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) { return conv1x1_impl(x, w, &b); }

  // Temporal convolution, kernel Kt x 1 with zero same-padding over T.
  // x: N x C_in x T x V, w: C_out x C_in x Kt, b: C_out.
  TensorT<S> temporal_conv(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    if (x.ndim() != 4 || w.ndim() != 3 || b.ndim() != 1)
      throw ShapeError("temporal_conv: expected x[N,C,T,V], w[Co,Ci,Kt], b[Co]");
    const int n = x.dim(0), ci = x.dim(1), t = x.dim(2), v = x.dim(3);
    const int co = w.dim(0), kt = w.dim(2);
    if (w.dim(1) != ci || b.dim(0) != co)
      throw ShapeError("temporal_conv: weight " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()));
    if (kt % 2 == 0) throw ShapeError("temporal_conv: kernel size must be odd for same-padding");
    const int pad = (kt - 1) / 2;
    const std::size_t tv = static_cast<std::size_t>(t) * v;
    const int krows = ci * kt;

    TensorT<S> out(Shape{n, co, t, v});
    std::vector<S> col(static_cast<std::size_t>(krows) * tv);
    for (int s = 0; s < n; ++s) {
      im2col(x.data() + static_cast<std::size_t>(s) * ci * tv, ci, t, v, kt, pad, col.data());
      S* po = out.data() + static_cast<std::size_t>(s) * co * tv;
      for (int c = 0; c < co; ++c) {
        const S bias = b.data()[c];
        S* row = po + static_cast<std::size_t>(c) * tv;
        for (std::size_t i = 0; i < tv; ++i) row[i] = bias;
      }
      detail::gemm(false, false, co, static_cast<int>(tv), krows, S(1), w.data(), krows, col.data(), static_cast<int>(tv), S(1), po, static_cast<int>(tv));
    }
    finish("temporal_conv", out);
    if (should_record({&x, &w, &b})) {
      int ix = node_of(x), iw = node_of(w), ib = node_of(b), io = make_node(out);
      record("temporal_conv", {ix, iw, ib}, io, [this, x, ix, iw, ib, io, n, ci, t, v, co, kt, pad, tv, krows, w] {
        const S* gy = grads_[io].data();
        std::vector<S> col(static_cast<std::size_t>(krows) * tv);
        std::vector<S> gcol;
        if (ix >= 0) gcol.resize(col.size());
        for (int s = 0; s < n; ++s) {
          const S* gyn = gy + static_cast<std::size_t>(s) * co * tv;
          if (iw >= 0) {
            im2col(x.data() + static_cast<std::size_t>(s) * ci * tv, ci, t, v, kt, pad, col.data());
            detail::gemm(false, true, co, krows, static_cast<int>(tv), S(1), gyn, static_cast<int>(tv), col.data(), static_cast<int>(tv), S(1), grads_[iw].data(), krows);
          }
          if (ix >= 0) {
            detail::gemm(true, false, krows, static_cast<int>(tv), co, S(1), w.data(), krows, gyn, static_cast<int>(tv), S(0), gcol.data(), static_cast<int>(tv));
            col2im_add(gcol.data(), ci, t, v, kt, pad, grads_[ix].data() + static_cast<std::size_t>(s) * ci * tv);
          }
          if (ib >= 0) {
            S* gb = grads_[ib].data();
            for (int c = 0; c < co; ++c) {
              const S* row = gyn + static_cast<std::size_t>(c) * tv;
              double acc = 0.0;
              for (std::size_t i = 0; i < tv; ++i) acc += static_cast<double>(row[i]);
              gb[c] += static_cast<S>(acc);
            }
          }
        }
      });
    }
    return out;
  }

  // Vertex-axis aggregation: out[n,c,t,:] = x[n,c,t,:] * A, with A either a
  // shared V x V matrix or a per-sample N x V x V stack.
  TensorT<S> vertex_aggregate(const TensorT<S>& x, const TensorT<S>& a) {
    if (x.ndim() != 4) throw ShapeError("vertex_aggregate: expected x[N,C,T,V]");
    const int n = x.dim(0), c = x.dim(1), t = x.dim(2), v = x.dim(3);
    const bool per_sample = a.ndim() == 3;
    if (per_sample) {
      if (a.dim(0) != n || a.dim(1) != v || a.dim(2) != v)
        throw ShapeError("vertex_aggregate: adjacency " + shape_str(a.shape()) + " does not match input " + shape_str(x.shape()));
    } else if (a.ndim() != 2 || a.dim(0) != v || a.dim(1) != v) {
      throw ShapeError("vertex_aggregate: adjacency " + shape_str(a.shape()) + " does not match input " + shape_str(x.shape()));
    }
    const int rows = c * t;
    const std::size_t xstride = static_cast<std::size_t>(rows) * v;
    const std::size_t astride = per_sample ? static_cast<std::size_t>(v) * v : 0;
    TensorT<S> out(x.shape());
    for (int s = 0; s < n; ++s)
      detail::gemm(false, false, rows, v, v, S(1), x.data() + s * xstride, v, a.data() + s * astride, v, S(0), out.data() + s * xstride, v);
    finish("vertex_aggregate", out);
    if (should_record({&x, &a})) {
      int ix = node_of(x), ia = node_of(a), io = make_node(out);
      record("vertex_aggregate", {ix, ia}, io, [this, x, a, ix, ia, io, n, v, rows, xstride, astride] {
        const S* gy = grads_[io].data();
        for (int s = 0; s < n; ++s) {
          const S* gyn = gy + s * xstride;
          if (ix >= 0)
            detail::gemm(false, true, rows, v, v, S(1), gyn, v, a.data() + s * astride, v, S(1), grads_[ix].data() + s * xstride, v);
          if (ia >= 0)
            detail::gemm(true, false, v, v, rows, S(1), x.data() + s * xstride, v, gyn, v, S(1), grads_[ia].data() + s * astride, v);
        }
      });
    }
    return out;
  }

  // Per-sample embedded similarity: theta,phi N x Ce x T x V -> N x V x V,
  // out_n = theta_n^T phi_n with theta_n viewed as (Ce*T) x V.
  TensorT<S> vertex_similarity(const TensorT<S>& theta, const TensorT<S>& phi) {
    require_same_shape("vertex_similarity", theta, phi);
    if (theta.ndim() != 4) throw ShapeError("vertex_similarity: expected [N,Ce,T,V]");
    const int n = theta.dim(0), rows = theta.dim(1) * theta.dim(2), v = theta.dim(3);
    const std::size_t estride = static_cast<std::size_t>(rows) * v;
    const std::size_t ostride = static_cast<std::size_t>(v) * v;
    TensorT<S> out(Shape{n, v, v});
    for (int s = 0; s < n; ++s)
      detail::gemm(true, false, v, v, rows, S(1), theta.data() + s * estride, v, phi.data() + s * estride, v, S(0), out.data() + s * ostride, v);
    finish("vertex_similarity", out);
    if (should_record({&theta, &phi})) {
      int it = node_of(theta), ip = node_of(phi), io = make_node(out);
      record("vertex_similarity", {it, ip}, io, [this, theta, phi, it, ip, io, n, rows, v, estride, ostride] {
        const S* gy = grads_[io].data();
        for (int s = 0; s < n; ++s) {
          const S* gyn = gy + s * ostride;
          if (it >= 0)
            detail::gemm(false, true, rows, v, v, S(1), phi.data() + s * estride, v, gyn, v, S(1), grads_[it].data() + s * estride, v);
          if (ip >= 0)
            detail::gemm(false, false, rows, v, v, S(1), theta.data() + s * estride, v, gyn, v, S(1), grads_[ip].data() + s * estride, v);
        }
      });
    }
    return out;
  }

  // ---- normalization / reductions ----

  // Batch normalization over the layout's reduce axes. Train mode uses batch
  // statistics and updates the running estimates in place (unbiased variance,
  // momentum kBnMomentum); eval mode is an affine map from the running stats.
  TensorT<S> batch_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                        std::vector<S>& run_mean, std::vector<S>& run_var, BnLayout layout, bool train) {
    if (x.ndim() != 4) throw ShapeError("batch_norm: expected x[N,C,T,V]");
    const int n = x.dim(0), c = x.dim(1), t = x.dim(2), v = x.dim(3);
    const int feats = layout == BnLayout::PerChannel ? c : c * v;
    if (static_cast<int>(gamma.size()) != feats || static_cast<int>(beta.size()) != feats ||
        static_cast<int>(run_mean.size()) != feats || static_cast<int>(run_var.size()) != feats)
      throw ShapeError("batch_norm: parameter length does not match feature count " + std::to_string(feats));

    const std::size_t total = x.size();
    const std::size_t m = total / static_cast<std::size_t>(feats);
    std::vector<double> mean(feats, 0.0), var(feats, 0.0);
    const S* px = x.data();
    if (train) {
      if (m < 2) throw ShapeError("batch_norm: need at least 2 reduce elements per feature in train mode");
      for_each_feature(n, c, t, v, layout, [&](std::size_t i, int f) { mean[f] += static_cast<double>(px[i]); });
      for (int f = 0; f < feats; ++f) mean[f] /= static_cast<double>(m);
      for_each_feature(n, c, t, v, layout, [&](std::size_t i, int f) {
        const double d = static_cast<double>(px[i]) - mean[f];
        var[f] += d * d;
      });
      for (int f = 0; f < feats; ++f) var[f] /= static_cast<double>(m);
      for (int f = 0; f < feats; ++f) {
        const double unbiased = var[f] * static_cast<double>(m) / static_cast<double>(m - 1);
        run_mean[f] = static_cast<S>((1.0 - kBnMomentum) * static_cast<double>(run_mean[f]) + kBnMomentum * mean[f]);
        run_var[f] = static_cast<S>((1.0 - kBnMomentum) * static_cast<double>(run_var[f]) + kBnMomentum * unbiased);
      }
    } else {
      for (int f = 0; f < feats; ++f) {
        mean[f] = static_cast<double>(run_mean[f]);
        var[f] = static_cast<double>(run_var[f]);
      }
    }

    std::vector<S> inv_std(feats);
    for (int f = 0; f < feats; ++f) inv_std[f] = static_cast<S>(1.0 / std::sqrt(var[f] + kBnEps));
    std::vector<S> mean_s(feats);
    for (int f = 0; f < feats; ++f) mean_s[f] = static_cast<S>(mean[f]);

    TensorT<S> out(x.shape());
    S* po = out.data();
    const S* pg = gamma.data();
    const S* pb = beta.data();
    for_each_feature(n, c, t, v, layout, [&](std::size_t i, int f) {
      po[i] = pg[f] * (px[i] - mean_s[f]) * inv_std[f] + pb[f];
    });
    finish("batch_norm", out);

    if (should_record({&x, &gamma, &beta})) {
      int ix = node_of(x), ig = node_of(gamma), ib = node_of(beta), io = make_node(out);
      record("batch_norm", {ix, ig, ib}, io,
             [this, x, gamma, ix, ig, ib, io, n, c, t, v, feats, m, layout, train,
              mean_s = std::move(mean_s), inv_std = std::move(inv_std)] {
        const std::vector<S>& gy = grads_[io];
        const S* px2 = x.data();
        const S* pg2 = gamma.data();
        std::vector<double> sum_dxhat(feats, 0.0), sum_dxhat_xhat(feats, 0.0), sum_dy(feats, 0.0), sum_dy_xhat(feats, 0.0);
        for_each_feature(n, c, t, v, layout, [&](std::size_t i, int f) {
          const double xhat = static_cast<double>((px2[i] - mean_s[f]) * inv_std[f]);
          const double dy = static_cast<double>(gy[i]);
          const double dxhat = dy * static_cast<double>(pg2[f]);
          sum_dy[f] += dy;
          sum_dy_xhat[f] += dy * xhat;
          sum_dxhat[f] += dxhat;
          sum_dxhat_xhat[f] += dxhat * xhat;
        });
        if (ig >= 0) {
          S* gg = grads_[ig].data();
          for (int f = 0; f < feats; ++f) gg[f] += static_cast<S>(sum_dy_xhat[f]);
        }
        if (ib >= 0) {
          S* gb = grads_[ib].data();
          for (int f = 0; f < feats; ++f) gb[f] += static_cast<S>(sum_dy[f]);
        }
        if (ix >= 0) {
          S* gx = grads_[ix].data();
          const double inv_m = 1.0 / static_cast<double>(m);
          for_each_feature(n, c, t, v, layout, [&](std::size_t i, int f) {
            const double dxhat = static_cast<double>(gy[i]) * static_cast<double>(pg2[f]);
            if (train) {
              const double xhat = static_cast<double>((px2[i] - mean_s[f]) * inv_std[f]);
              gx[i] += static_cast<S>(static_cast<double>(inv_std[f]) *
                                      (dxhat - sum_dxhat[f] * inv_m - xhat * sum_dxhat_xhat[f] * inv_m));
            } else {
              gx[i] += static_cast<S>(dxhat * static_cast<double>(inv_std[f]));
            }
          });
        }
      });
    }
    return out;
  }

  // Global average pool over T x V: N x C x T x V -> N x C.
  TensorT<S> global_avg_pool(const TensorT<S>& x) {
    if (x.ndim() != 4) throw ShapeError("global_avg_pool: expected x[N,C,T,V]");
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t tv = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    TensorT<S> out(Shape{n, c});
    const S* px = x.data();
    S* po = out.data();
    for (int i = 0; i < n * c; ++i) {
      double acc = 0.0;
      const S* row = px + static_cast<std::size_t>(i) * tv;
      for (std::size_t j = 0; j < tv; ++j) acc += static_cast<double>(row[j]);
      po[i] = static_cast<S>(acc / static_cast<double>(tv));
    }
    finish("global_avg_pool", out);
    if (should_record({&x})) {
      int ix = node_of(x), io = make_node(out);
      record("global_avg_pool", {ix}, io, [this, ix, io, n, c, tv] {
        if (ix < 0) return;
        const std::vector<S>& gy = grads_[io];
        S* gx = grads_[ix].data();
        const S inv = static_cast<S>(1.0 / static_cast<double>(tv));
        for (int i = 0; i < n * c; ++i) {
          const S g = gy[i] * inv;
          S* row = gx + static_cast<std::size_t>(i) * tv;
          for (std::size_t j = 0; j < tv; ++j) row[j] += g;
        }
      });
    }
    return out;
  }

  TensorT<S> reduce_sum(const TensorT<S>& x) {
    double acc = 0.0;
    const S* px = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(px[i]);
    TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
    finish("reduce_sum", out);
    if (should_record({&x})) {
      int ix = node_of(x), io = make_node(out);
      record("reduce_sum", {ix}, io, [this, ix, io] {
        if (ix < 0) return;
        const S g = grads_[io][0];
        for (S& v : grads_[ix]) v += g;
      });
    }
    return out;
  }

  // Tile x along a new leading axis of length n; adjoint sums over it.
  TensorT<S> expand0(const TensorT<S>& x, int n) {
    if (n <= 0) throw ShapeError("expand0: count must be positive");
    Shape os;
    os.reserve(x.shape().size() + 1);
    os.push_back(n);
    for (int d : x.shape()) os.push_back(d);
    TensorT<S> out(os);
    const std::size_t sz = x.size();
    for (int i = 0; i < n; ++i) std::copy(x.data(), x.data() + sz, out.data() + static_cast<std::size_t>(i) * sz);
    finish("expand0", out);
    if (should_record({&x})) {
      int ix = node_of(x), io = make_node(out);
      record("expand0", {ix}, io, [this, ix, io, n, sz] {
        if (ix < 0) return;
        const S* gy = grads_[io].data();
        S* gx = grads_[ix].data();
        for (int i = 0; i < n; ++i) {
          const S* row = gy + static_cast<std::size_t>(i) * sz;
          for (std::size_t j = 0; j < sz; ++j) gx[j] += row[j];
        }
      });
    }
    return out;
  }

  // ---- backward ----

  void backward(const TensorT<S>& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    backward_seeded(loss, std::vector<S>{S(1)});
  }

  void backward_seeded(const TensorT<S>& out, const std::vector<S>& seed) {
    if (consumed_) throw NumericError("backward: tape already consumed");
    const int node = lookup_node(out);
    if (node < 0) throw ShapeError("backward: tensor is not reachable from recorded primitives");
    if (seed.size() != out.size()) throw ShapeError("backward: seed size does not match output");
    std::vector<S>& g = grads_[node];
    for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) it->adjoint();
    consumed_ = true;
  }

  bool consumed() const { return consumed_; }

  // Gradient for any tensor; zeros when the tensor never joined the graph.
  std::vector<S> grad(const TensorT<S>& t) const {
    const int node = lookup_node(t);
    if (node < 0) return std::vector<S>(t.size(), S(0));
    return grads_[node];
  }

 private:
  struct Rec {
    const char* op;
    std::function<void()> adjoint;
  };

  static void require_same_shape(const char* op, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
      throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }

  static std::tuple<std::size_t, std::size_t, std::size_t> slice_geometry(const Shape& s, int axis) {
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= static_cast<std::size_t>(s[i]);
    return {outer, static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]), inner};
  }

  template <class F>
  static void for_each_feature(int n, int c, int t, int v, BnLayout layout, F&& fn) {
    std::size_t i = 0;
    if (layout == BnLayout::PerChannel) {
      for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
          const std::size_t count = static_cast<std::size_t>(t) * v;
          for (std::size_t j = 0; j < count; ++j, ++i) fn(i, ic);
        }
    } else {
      for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
          for (int it = 0; it < t; ++it)
            for (int iv = 0; iv < v; ++iv, ++i) fn(i, ic * v + iv);
    }
  }

  static void im2col(const S* x, int c, int t, int v, int kt, int pad, S* col) {
    // col is (c*kt) x (t*v); row (ci*kt + j) holds x[ci, t + j - pad, :]
    const std::size_t tv = static_cast<std::size_t>(t) * v;
    for (int ci = 0; ci < c; ++ci)
      for (int j = 0; j < kt; ++j) {
        S* row = col + (static_cast<std::size_t>(ci) * kt + j) * tv;
        const int shift = j - pad;
        for (int tt = 0; tt < t; ++tt) {
          const int src_t = tt + shift;
          S* dst = row + static_cast<std::size_t>(tt) * v;
          if (src_t < 0 || src_t >= t) {
            for (int iv = 0; iv < v; ++iv) dst[iv] = S(0);
          } else {
            const S* src = x + (static_cast<std::size_t>(ci) * t + src_t) * v;
            for (int iv = 0; iv < v; ++iv) dst[iv] = src[iv];
          }
        }
      }
  }

  static void col2im_add(const S* col, int c, int t, int v, int kt, int pad, S* x) {
    const std::size_t tv = static_cast<std::size_t>(t) * v;
    for (int ci = 0; ci < c; ++ci)
      for (int j = 0; j < kt; ++j) {
        const S* row = col + (static_cast<std::size_t>(ci) * kt + j) * tv;
        const int shift = j - pad;
        for (int tt = 0; tt < t; ++tt) {
          const int dst_t = tt + shift;
          if (dst_t < 0 || dst_t >= t) continue;
          S* dst = x + (static_cast<std::size_t>(ci) * t + dst_t) * v;
          const S* src = row + static_cast<std::size_t>(tt) * v;
          for (int iv = 0; iv < v; ++iv) dst[iv] += src[iv];
        }
      }
  }

  TensorT<S> conv1x1_impl(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>* b) {
    if (x.ndim() != 4 || w.ndim() != 2 || w.dim(1) != x.dim(1) || (b && (b->ndim() != 1 || b->dim(0) != w.dim(0))))
      throw ShapeError("conv1x1: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const int n = x.dim(0), ci = x.dim(1), co = w.dim(0);
    const std::size_t tv = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    TensorT<S> out(Shape{n, co, x.dim(2), x.dim(3)});
    for (int s = 0; s < n; ++s) {
      S* po = out.data() + static_cast<std::size_t>(s) * co * tv;
      if (b) {
        for (int c = 0; c < co; ++c) {
          const S bias = b->data()[c];
          S* row = po + static_cast<std::size_t>(c) * tv;
          for (std::size_t i = 0; i < tv; ++i) row[i] = bias;
        }
      }
      detail::gemm(false, false, co, static_cast<int>(tv), ci, S(1), w.data(), ci, x.data() + static_cast<std::size_t>(s) * ci * tv, static_cast<int>(tv), b ? S(1) : S(0), po, static_cast<int>(tv));
    }
    finish("conv1x1", out);
    std::vector<const TensorT<S>*> ins{&x, &w};
    if (b) ins.push_back(b);
    if (should_record(ins)) {
      int ix = node_of(x), iw = node_of(w), ib = b ? node_of(*b) : -1;
      int io = make_node(out);
      record("conv1x1", {ix, iw, ib}, io, [this, x, w, ix, iw, ib, io, n, ci, co, tv] {
        const S* gy = grads_[io].data();
        for (int s = 0; s < n; ++s) {
          const S* gyn = gy + static_cast<std::size_t>(s) * co * tv;
          const S* xn = x.data() + static_cast<std::size_t>(s) * ci * tv;
          if (iw >= 0) detail::gemm(false, true, co, ci, static_cast<int>(tv), S(1), gyn, static_cast<int>(tv), xn, static_cast<int>(tv), S(1), grads_[iw].data(), ci);
          if (ix >= 0) detail::gemm(true, false, ci, static_cast<int>(tv), co, S(1), w.data(), ci, gyn, static_cast<int>(tv), S(1), grads_[ix].data() + static_cast<std::size_t>(s) * ci * tv, static_cast<int>(tv));
          if (ib >= 0) {
            S* gb = grads_[ib].data();
            for (int c = 0; c < co; ++c) {
              const S* row = gyn + static_cast<std::size_t>(c) * tv;
              double acc = 0.0;
              for (std::size_t i = 0; i < tv; ++i) acc += static_cast<double>(row[i]);
              gb[c] += static_cast<S>(acc);
            }
          }
        }
      });
    }
    return out;
  }

  template <class FwdFn>
  TensorT<S> ewise(const char* op, const TensorT<S>& a, const TensorT<S>& b, FwdFn fn, S da, S db) {
    require_same_shape(op, a, b);
    TensorT<S> out(a.shape());
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = fn(pa[i], pb[i]);
    finish(op, out);
    if (should_record({&a, &b})) {
      int ia = node_of(a), ib = node_of(b), io = make_node(out);
      record(op, {ia, ib}, io, [this, ia, ib, io, da, db] {
        const std::vector<S>& gy = grads_[io];
        if (ia >= 0) {
          S* ga = grads_[ia].data();
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += da * gy[i];
        }
        if (ib >= 0) {
          S* gb = grads_[ib].data();
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += db * gy[i];
        }
      });
    }
    return out;
  }

  void finish(const char* op, const TensorT<S>& out) const {
    if (!out.all_finite())
      throw NumericError(std::string(op) + ": non-finite value in output of shape " + shape_str(out.shape()));
  }

  bool should_record(std::initializer_list<const TensorT<S>*> ins) { return should_record(std::vector<const TensorT<S>*>(ins)); }

  bool should_record(const std::vector<const TensorT<S>*>& ins) const {
    if (!grad_enabled_) return false;
    for (const auto* t : ins)
      if (t->requires_grad() || lookup_node(*t) >= 0) return true;
    return false;
  }

  int lookup_node(const TensorT<S>& t) const {
    auto it = ids_.find(t.key());
    return it == ids_.end() ? -1 : it->second;
  }

  // Node id for an op input: registers a leaf when gradients should flow.
  int node_of(const TensorT<S>& t) {
    const int existing = lookup_node(t);
    if (existing >= 0) return existing;
    if (!t.requires_grad()) return -1;
    return register_node(t);
  }

  int make_node(TensorT<S>& out) {
    out.set_requires_grad(true);
    return register_node(out);
  }

  int register_node(const TensorT<S>& t) {
    const int id = static_cast<int>(grads_.size());
    grads_.emplace_back(t.size(), S(0));
    ids_.emplace(t.key(), id);
    // pin the storage: node identity is the buffer address, which must stay
    // unique for the life of the tape
    node_tensors_.push_back(t);
    return id;
  }

  void record(const char* op, std::initializer_list<int>, int, std::function<void()> adjoint) {
    recs_.push_back(Rec{op, std::move(adjoint)});
  }

  std::vector<Rec> recs_;
  std::vector<std::vector<S>> grads_;
  std::vector<TensorT<S>> node_tensors_;
  std::unordered_map<const void*, int> ids_;
  Rng rng_;
  bool grad_enabled_ = true;
  bool consumed_ = false;
};

using Tape = TapeT<double>;
using TapeF = TapeT<float>;

}  // namespace pulsar
