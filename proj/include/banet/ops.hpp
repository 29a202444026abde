#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "banet/tensor.hpp"

namespace banet {

struct ConvSpec {
  index_t in_ch = 1, out_ch = 1;
  index_t kh = 1, kw = 1;
  index_t sh = 1, sw = 1;
  index_t ph = 0, pw = 0;
  index_t dh = 1, dw = 1;
  bool has_bias = true;

  index_t out_h(index_t in_h) const { return (in_h + 2 * ph - dh * (kh - 1) - 1) / sh + 1; }
  index_t out_w(index_t in_w) const { return (in_w + 2 * pw - dw * (kw - 1) - 1) / sw + 1; }
  // Transposed-conv output extents (adjoint direction).
  index_t tout_h(index_t in_h) const { return (in_h - 1) * sh - 2 * ph + dh * (kh - 1) + 1; }
  index_t tout_w(index_t in_w) const { return (in_w - 1) * sw - 2 * pw + dw * (kw - 1) + 1; }

  index_t weight_count() const { return out_ch * in_ch * kh * kw; }
  index_t param_count() const { return weight_count() + (has_bias ? out_ch : 0); }
};

template <class S>
struct ConvParams {
  ConvSpec spec;
  Tensor<S> weight;            // (out_ch, in_ch, kh, kw)
  std::vector<S> bias;         // length out_ch when spec.has_bias

  ConvParams() = default;
  explicit ConvParams(const ConvSpec& sp)
      : spec(sp),
        weight(Shape4{sp.out_ch, sp.in_ch, sp.kh, sp.kw}),
        bias(sp.has_bias ? static_cast<size_t>(sp.out_ch) : 0, S(0)) {}
};

// Gradient buffers shaped like a ConvParams.
template <class S>
struct ConvGrads {
  Tensor<S> weight;
  std::vector<S> bias;

  ConvGrads() = default;
  explicit ConvGrads(const ConvSpec& sp)
      : weight(Shape4{sp.out_ch, sp.in_ch, sp.kh, sp.kw}),
        bias(sp.has_bias ? static_cast<size_t>(sp.out_ch) : 0, S(0)) {}
};

namespace detail {
inline void check_conv_input(const Shape4& x, const ConvSpec& sp, const char* op) {
  if (x.c != sp.in_ch)
    throw ShapeError(std::string(op) + ": channel axis mismatch, input has " +
                     std::to_string(x.c) + " channels but spec expects " +
                     std::to_string(sp.in_ch));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d (cross-correlation, no kernel flip)
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const ConvParams<S>& p) {
  check_finite(x, "conv2d");
  const ConvSpec& sp = p.spec;
  detail::check_conv_input(x.shape(), sp, "conv2d");
  const index_t N = x.shape().n, H = x.shape().h, W = x.shape().w;
  const index_t OH = sp.out_h(H), OW = sp.out_w(W);
  if (OH < 1 || OW < 1)
    throw ShapeError("conv2d: output spatial axis degenerates (" + std::to_string(OH) + "x" +
                     std::to_string(OW) + ") for input " + x.shape().str());

  Tensor<S> out(Shape4{N, sp.out_ch, OH, OW});
  const S* xd = x.data();
  const S* wd = p.weight.data();
  S* od = out.data();

  for (index_t n = 0; n < N; ++n) {
    for (index_t oc = 0; oc < sp.out_ch; ++oc) {
      S* oplane = od + ((n * sp.out_ch + oc) * OH) * OW;
      const S b = sp.has_bias ? p.bias[static_cast<size_t>(oc)] : S(0);
      std::fill(oplane, oplane + OH * OW, b);
      for (index_t ic = 0; ic < sp.in_ch; ++ic) {
        const S* xplane = xd + ((n * sp.in_ch + ic) * H) * W;
        const S* wk = wd + ((oc * sp.in_ch + ic) * sp.kh) * sp.kw;
        for (index_t u = 0; u < sp.kh; ++u) {
          for (index_t v = 0; v < sp.kw; ++v) {
            const S wv = wk[u * sp.kw + v];
            if (wv == S(0)) continue;
            for (index_t oh = 0; oh < OH; ++oh) {
              const index_t ih = oh * sp.sh - sp.ph + u * sp.dh;
              if (ih < 0 || ih >= H) continue;
              const S* xrow = xplane + ih * W;
              S* orow = oplane + oh * OW;
              const index_t iw0 = -sp.pw + v * sp.dw;
              if (sp.sw == 1) {
                const index_t lo = std::max<index_t>(0, -iw0);
                const index_t hi = std::min<index_t>(OW, W - iw0);
                for (index_t ow = lo; ow < hi; ++ow) orow[ow] += wv * xrow[iw0 + ow];
              } else {
                for (index_t ow = 0; ow < OW; ++ow) {
                  const index_t iw = iw0 + ow * sp.sw;
                  if (iw >= 0 && iw < W) orow[ow] += wv * xrow[iw];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <class S>
Tensor<S> conv2d_backward(const Tensor<S>& x, const ConvParams<S>& p, const Tensor<S>& gy,
                          ConvGrads<S>& g) {
  const ConvSpec& sp = p.spec;
  detail::check_conv_input(x.shape(), sp, "conv2d_backward");
  const index_t N = x.shape().n, H = x.shape().h, W = x.shape().w;
  const index_t OH = sp.out_h(H), OW = sp.out_w(W);
  if (gy.shape() != Shape4{N, sp.out_ch, OH, OW})
    throw ShapeError("conv2d_backward: gy shape " + gy.shape().str() + " does not match output " +
                     Shape4{N, sp.out_ch, OH, OW}.str());

  Tensor<S> gx(x.shape());
  const S* xd = x.data();
  const S* wd = p.weight.data();
  const S* gd = gy.data();
  S* gxd = gx.data();
  S* gwd = g.weight.data();

  for (index_t n = 0; n < N; ++n) {
    for (index_t oc = 0; oc < sp.out_ch; ++oc) {
      const S* gplane = gd + ((n * sp.out_ch + oc) * OH) * OW;
      if (sp.has_bias) {
        S acc = S(0);
        for (index_t i = 0; i < OH * OW; ++i) acc += gplane[i];
        g.bias[static_cast<size_t>(oc)] += acc;
      }
      for (index_t ic = 0; ic < sp.in_ch; ++ic) {
        const S* xplane = xd + ((n * sp.in_ch + ic) * H) * W;
        S* gxplane = gxd + ((n * sp.in_ch + ic) * H) * W;
        const S* wk = wd + ((oc * sp.in_ch + ic) * sp.kh) * sp.kw;
        S* gwk = gwd + ((oc * sp.in_ch + ic) * sp.kh) * sp.kw;
        for (index_t u = 0; u < sp.kh; ++u) {
          for (index_t v = 0; v < sp.kw; ++v) {
            const S wv = wk[u * sp.kw + v];
            S gw_acc = S(0);
            for (index_t oh = 0; oh < OH; ++oh) {
              const index_t ih = oh * sp.sh - sp.ph + u * sp.dh;
              if (ih < 0 || ih >= H) continue;
              const S* xrow = xplane + ih * W;
              S* gxrow = gxplane + ih * W;
              const S* grow = gplane + oh * OW;
              const index_t iw0 = -sp.pw + v * sp.dw;
              if (sp.sw == 1) {
                const index_t lo = std::max<index_t>(0, -iw0);
                const index_t hi = std::min<index_t>(OW, W - iw0);
                for (index_t ow = lo; ow < hi; ++ow) {
                  gw_acc += grow[ow] * xrow[iw0 + ow];
                  gxrow[iw0 + ow] += wv * grow[ow];
                }
              } else {
                for (index_t ow = 0; ow < OW; ++ow) {
                  const index_t iw = iw0 + ow * sp.sw;
                  if (iw >= 0 && iw < W) {
                    gw_acc += grow[ow] * xrow[iw];
                    gxrow[iw] += wv * grow[ow];
                  }
                }
              }
            }
            gwk[u * sp.kw + v] += gw_acc;
          }
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// conv_transpose2d (adjoint of conv2d; weight layout (out_ch, in_ch, kh, kw))
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> conv_transpose2d(const Tensor<S>& x, const ConvParams<S>& p) {
  check_finite(x, "conv_transpose2d");
  const ConvSpec& sp = p.spec;
  detail::check_conv_input(x.shape(), sp, "conv_transpose2d");
  const index_t N = x.shape().n, H = x.shape().h, W = x.shape().w;
  const index_t OH = sp.tout_h(H), OW = sp.tout_w(W);
  if (OH < 1 || OW < 1)
    throw ShapeError("conv_transpose2d: output spatial axis degenerates for input " +
                     x.shape().str());

  Tensor<S> out(Shape4{N, sp.out_ch, OH, OW});
  const S* xd = x.data();
  const S* wd = p.weight.data();
  S* od = out.data();

  for (index_t n = 0; n < N; ++n) {
    for (index_t oc = 0; oc < sp.out_ch; ++oc) {
      S* oplane = od + ((n * sp.out_ch + oc) * OH) * OW;
      if (sp.has_bias)
        std::fill(oplane, oplane + OH * OW, p.bias[static_cast<size_t>(oc)]);
      for (index_t ic = 0; ic < sp.in_ch; ++ic) {
        const S* xplane = xd + ((n * sp.in_ch + ic) * H) * W;
        const S* wk = wd + ((oc * sp.in_ch + ic) * sp.kh) * sp.kw;
        for (index_t u = 0; u < sp.kh; ++u) {
          for (index_t v = 0; v < sp.kw; ++v) {
            const S wv = wk[u * sp.kw + v];
            if (wv == S(0)) continue;
            for (index_t i = 0; i < H; ++i) {
              const index_t oh = i * sp.sh - sp.ph + u * sp.dh;
              if (oh < 0 || oh >= OH) continue;
              const S* xrow = xplane + i * W;
              S* orow = oplane + oh * OW;
              const index_t ow0 = -sp.pw + v * sp.dw;
              for (index_t j = 0; j < W; ++j) {
                const index_t ow = ow0 + j * sp.sw;
                if (ow >= 0 && ow < OW) orow[ow] += wv * xrow[j];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <class S>
Tensor<S> conv_transpose2d_backward(const Tensor<S>& x, const ConvParams<S>& p,
                                    const Tensor<S>& gy, ConvGrads<S>& g) {
  const ConvSpec& sp = p.spec;
  detail::check_conv_input(x.shape(), sp, "conv_transpose2d_backward");
  const index_t N = x.shape().n, H = x.shape().h, W = x.shape().w;
  const index_t OH = sp.tout_h(H), OW = sp.tout_w(W);
  if (gy.shape() != Shape4{N, sp.out_ch, OH, OW})
    throw ShapeError("conv_transpose2d_backward: gy shape " + gy.shape().str() +
                     " does not match output");

  Tensor<S> gx(x.shape());
  const S* xd = x.data();
  const S* wd = p.weight.data();
  const S* gd = gy.data();
  S* gxd = gx.data();
  S* gwd = g.weight.data();

  for (index_t n = 0; n < N; ++n) {
    for (index_t oc = 0; oc < sp.out_ch; ++oc) {
      const S* gplane = gd + ((n * sp.out_ch + oc) * OH) * OW;
      if (sp.has_bias) {
        S acc = S(0);
        for (index_t i = 0; i < OH * OW; ++i) acc += gplane[i];
        g.bias[static_cast<size_t>(oc)] += acc;
      }
      for (index_t ic = 0; ic < sp.in_ch; ++ic) {
        const S* xplane = xd + ((n * sp.in_ch + ic) * H) * W;
        S* gxplane = gxd + ((n * sp.in_ch + ic) * H) * W;
        const S* wk = wd + ((oc * sp.in_ch + ic) * sp.kh) * sp.kw;
        S* gwk = gwd + ((oc * sp.in_ch + ic) * sp.kh) * sp.kw;
        for (index_t u = 0; u < sp.kh; ++u) {
          for (index_t v = 0; v < sp.kw; ++v) {
            const S wv = wk[u * sp.kw + v];
            S gw_acc = S(0);
            for (index_t i = 0; i < H; ++i) {
              const index_t oh = i * sp.sh - sp.ph + u * sp.dh;
              if (oh < 0 || oh >= OH) continue;
              const S* xrow = xplane + i * W;
              S* gxrow = gxplane + i * W;
              const S* grow = gplane + oh * OW;
              const index_t ow0 = -sp.pw + v * sp.dw;
              for (index_t j = 0; j < W; ++j) {
                const index_t ow = ow0 + j * sp.sw;
                if (ow >= 0 && ow < OW) {
                  gw_acc += grow[ow] * xrow[j];
                  gxrow[j] += wv * grow[ow];
                }
              }
            }
            gwk[u * sp.kw + v] += gw_acc;
          }
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// adaptive average pooling (floor-stride window law)
// ---------------------------------------------------------------------------

inline void adaptive_pool_law(index_t in, index_t out, index_t& stride, index_t& kernel) {
  stride = in / out;
  kernel = in - (out - 1) * stride;
}

template <class S>
Tensor<S> adaptive_avg_pool2d(const Tensor<S>& x, index_t out_h, index_t out_w) {
  check_finite(x, "adaptive_avg_pool2d");
  const Shape4 xs = x.shape();
  if (out_h < 1 || out_h > xs.h || out_w < 1 || out_w > xs.w)
    throw ShapeError("adaptive_avg_pool2d: target " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " out of range for input " + xs.str());
  index_t sv, kv, sh, kh;
  adaptive_pool_law(xs.h, out_h, sv, kv);
  adaptive_pool_law(xs.w, out_w, sh, kh);

  Tensor<S> out(Shape4{xs.n, xs.c, out_h, out_w});
  const S inv = S(1) / S(kv * kh);
  for (index_t n = 0; n < xs.n; ++n)
    for (index_t c = 0; c < xs.c; ++c) {
      const S* xplane = x.data() + ((n * xs.c + c) * xs.h) * xs.w;
      S* oplane = out.data() + ((n * xs.c + c) * out_h) * out_w;
      for (index_t i = 0; i < out_h; ++i)
        for (index_t j = 0; j < out_w; ++j) {
          S acc = S(0);
          for (index_t u = 0; u < kv; ++u) {
            const S* xrow = xplane + (i * sv + u) * xs.w + j * sh;
            for (index_t v = 0; v < kh; ++v) acc += xrow[v];
          }
          oplane[i * out_w + j] = acc * inv;
        }
    }
  return out;
}

template <class S>
Tensor<S> adaptive_avg_pool2d_backward(const Shape4& in_shape, const Tensor<S>& gy) {
  const Shape4 gs = gy.shape();
  if (gs.n != in_shape.n || gs.c != in_shape.c)
    throw ShapeError("adaptive_avg_pool2d_backward: batch/channel mismatch");
  index_t sv, kv, sh, kh;
  adaptive_pool_law(in_shape.h, gs.h, sv, kv);
  adaptive_pool_law(in_shape.w, gs.w, sh, kh);

  Tensor<S> gx(in_shape);
  const S inv = S(1) / S(kv * kh);
  for (index_t n = 0; n < gs.n; ++n)
    for (index_t c = 0; c < gs.c; ++c) {
      S* gxplane = gx.data() + ((n * gs.c + c) * in_shape.h) * in_shape.w;
      const S* gplane = gy.data() + ((n * gs.c + c) * gs.h) * gs.w;
      for (index_t i = 0; i < gs.h; ++i)
        for (index_t j = 0; j < gs.w; ++j) {
          const S gv = gplane[i * gs.w + j] * inv;
          for (index_t u = 0; u < kv; ++u) {
            S* gxrow = gxplane + (i * sv + u) * in_shape.w + j * sh;
            for (index_t v = 0; v < kh; ++v) gxrow[v] += gv;
          }
        }
    }
  return gx;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  check_finite(x, "relu");
  Tensor<S> out(x.shape());
  for (index_t i = 0; i < x.size(); ++i) out[i] = x[i] > S(0) ? x[i] : S(0);
  return out;
}

// Gradient at exactly 0 is 0.
template <class S>
Tensor<S> relu_backward(const Tensor<S>& x, const Tensor<S>& gy) {
  if (x.shape() != gy.shape()) throw ShapeError("relu_backward: shape mismatch");
  Tensor<S> gx(x.shape());
  for (index_t i = 0; i < x.size(); ++i) gx[i] = x[i] > S(0) ? gy[i] : S(0);
  return gx;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  check_finite(x, "sigmoid");
  Tensor<S> out(x.shape());
  for (index_t i = 0; i < x.size(); ++i) out[i] = S(1) / (S(1) + std::exp(-x[i]));
  return out;
}

// Takes the stored activation y = sigmoid(x).
template <class S>
Tensor<S> sigmoid_backward(const Tensor<S>& y, const Tensor<S>& gy) {
  if (y.shape() != gy.shape()) throw ShapeError("sigmoid_backward: shape mismatch");
  Tensor<S> gx(y.shape());
  for (index_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * y[i] * (S(1) - y[i]);
  return gx;
}

// ---------------------------------------------------------------------------
// concat / split along the channel axis
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> concat_channels(const std::vector<const Tensor<S>*>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape4 s0 = xs[0]->shape();
  index_t ctot = 0;
  for (const Tensor<S>* t : xs) {
    const Shape4 s = t->shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw ShapeError("concat_channels: spatial/batch mismatch between " + s0.str() + " and " +
                       s.str());
    ctot += s.c;
  }
  Tensor<S> out(Shape4{s0.n, ctot, s0.h, s0.w});
  const index_t plane = s0.h * s0.w;
  for (index_t n = 0; n < s0.n; ++n) {
    index_t coff = 0;
    for (const Tensor<S>* t : xs) {
      const index_t tc = t->shape().c;
      std::copy(t->data() + n * tc * plane, t->data() + (n + 1) * tc * plane,
                out.data() + (n * ctot + coff) * plane);
      coff += tc;
    }
  }
  return out;
}

template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& xs) {
  std::vector<const Tensor<S>*> ptrs;
  ptrs.reserve(xs.size());
  for (const Tensor<S>& t : xs) ptrs.push_back(&t);
  return concat_channels(ptrs);
}

template <class S>
std::vector<Tensor<S>> split_channels(const Tensor<S>& x, const std::vector<index_t>& sizes) {
  index_t ctot = 0;
  for (index_t c : sizes) ctot += c;
  if (ctot != x.shape().c)
    throw ShapeError("split_channels: sizes sum to " + std::to_string(ctot) + " but input has " +
                     std::to_string(x.shape().c) + " channels");
  const Shape4 s = x.shape();
  const index_t plane = s.h * s.w;
  std::vector<Tensor<S>> parts;
  parts.reserve(sizes.size());
  for (index_t c : sizes) parts.emplace_back(Shape4{s.n, c, s.h, s.w});
  for (index_t n = 0; n < s.n; ++n) {
    index_t coff = 0;
    for (size_t k = 0; k < sizes.size(); ++k) {
      const index_t tc = sizes[k];
      std::copy(x.data() + (n * s.c + coff) * plane, x.data() + (n * s.c + coff + tc) * plane,
                parts[k].data() + n * tc * plane);
      coff += tc;
    }
  }
  return parts;
}

// ---------------------------------------------------------------------------
// elementwise ops with singleton broadcasting on c/h/w
// ---------------------------------------------------------------------------

namespace detail {
inline bool bcast_compatible(const Shape4& a, const Shape4& b) {
  if (a.n != b.n) return false;
  auto ok = [](index_t x, index_t y) { return x == y || y == 1; };
  return ok(a.c, b.c) && ok(a.h, b.h) && ok(a.w, b.w);
}
}  // namespace detail

// Applies fn(a_elem, b_elem) over the shape of `a`, broadcasting singleton
// c/h/w axes of `b`.
template <class S, class F>
Tensor<S> eltwise_bcast(const Tensor<S>& a, const Tensor<S>& b, F&& fn, const char* op) {
  const Shape4 as = a.shape(), bs = b.shape();
  if (!detail::bcast_compatible(as, bs))
    throw ShapeError(std::string(op) + ": shapes " + as.str() + " and " + bs.str() +
                     " are not broadcast-compatible");
  Tensor<S> out(as);
  const index_t cm = (bs.c == 1) ? 0 : 1, hm = (bs.h == 1) ? 0 : 1, wm = (bs.w == 1) ? 0 : 1;
  for (index_t n = 0; n < as.n; ++n)
    for (index_t c = 0; c < as.c; ++c)
      for (index_t h = 0; h < as.h; ++h) {
        const S* arow = a.data() + ((n * as.c + c) * as.h + h) * as.w;
        const S* brow = b.data() + ((n * bs.c + c * cm) * bs.h + h * hm) * bs.w;
        S* orow = out.data() + ((n * as.c + c) * as.h + h) * as.w;
        for (index_t w = 0; w < as.w; ++w) orow[w] = fn(arow[w], brow[w * wm]);
      }
  return out;
}

template <class S>
Tensor<S> eltwise_mul(const Tensor<S>& a, const Tensor<S>& b) {
  return eltwise_bcast(a, b, [](S x, S y) { return x * y; }, "eltwise_mul");
}

template <class S>
Tensor<S> eltwise_add(const Tensor<S>& a, const Tensor<S>& b) {
  return eltwise_bcast(a, b, [](S x, S y) { return x + y; }, "eltwise_add");
}

// Sums `g` (shaped like the full operand) over axes that were broadcast to
// reach `target`; the backward reduction for eltwise broadcasting.
template <class S>
Tensor<S> reduce_to_shape(const Tensor<S>& g, const Shape4& target) {
  const Shape4 gs = g.shape();
  if (gs == target) return g;
  if (!detail::bcast_compatible(gs, target))
    throw ShapeError("reduce_to_shape: incompatible shapes");
  Tensor<S> out(target);
  const index_t cm = (target.c == 1) ? 0 : 1, hm = (target.h == 1) ? 0 : 1,
                wm = (target.w == 1) ? 0 : 1;
  for (index_t n = 0; n < gs.n; ++n)
    for (index_t c = 0; c < gs.c; ++c)
      for (index_t h = 0; h < gs.h; ++h) {
        const S* grow = g.data() + ((n * gs.c + c) * gs.h + h) * gs.w;
        S* orow = out.data() + ((n * target.c + c * cm) * target.h + h * hm) * target.w;
        for (index_t w = 0; w < gs.w; ++w) orow[w * wm] += grow[w];
      }
  return out;
}

// Backward of eltwise_mul: ga = gy*b reduced to a's shape (never reduced in
// practice since a carries the full shape), gb = gy*a reduced to b's shape.
template <class S>
void eltwise_mul_backward(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& gy,
                          Tensor<S>& ga, Tensor<S>& gb) {
  ga = reduce_to_shape(eltwise_bcast(gy, b, [](S x, S y) { return x * y; }, "eltwise_mul_backward"),
                       a.shape());
  gb = reduce_to_shape(eltwise_mul(gy, a), b.shape());
}

template <class S>
void eltwise_add_backward(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& gy,
                          Tensor<S>& ga, Tensor<S>& gb) {
  ga = gy;
  gb = reduce_to_shape(gy, b.shape());
}

// In-place accumulate: dst += src (equal shapes).
template <class S>
void accumulate(Tensor<S>& dst, const Tensor<S>& src) {
  if (dst.shape() != src.shape()) throw ShapeError("accumulate: shape mismatch");
  for (index_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace banet
