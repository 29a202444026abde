#pragma once

#include <utility>
#include <vector>

#include "banet/ops.hpp"
#include "banet/tensor.hpp"

namespace banet {

// Ordered strip scales; {1,3,5,7} is the default network configuration.
struct KernelSet {
  std::vector<index_t> ns = {1, 3, 5, 7};

  void validate(index_t min_dim) const {
    if (ns.empty()) throw ShapeError("KernelSet: empty");
    index_t prev = 0;
    for (index_t n : ns) {
      if (n <= prev) throw ShapeError("KernelSet: scales must be strictly increasing");
      prev = n;
    }
    if (ns.back() > min_dim)
      throw ShapeError("KernelSet: scale " + std::to_string(ns.back()) +
                       " exceeds minimum spatial extent " + std::to_string(min_dim));
  }
};

namespace detail {
// Per-scale strip convolution specs: 1-D kernel-3 along the long axis for
// n == 1, 3x3 with unit padding otherwise. Spatial extents are preserved.
inline ConvSpec strip_conv_spec_v(index_t n, index_t in_ch, index_t out_ch) {
  ConvSpec sp;
  sp.in_ch = in_ch;
  sp.out_ch = out_ch;
  if (n == 1) {
    sp.kh = 3; sp.kw = 1; sp.ph = 1; sp.pw = 0;
  } else {
    sp.kh = 3; sp.kw = 3; sp.ph = 1; sp.pw = 1;
  }
  return sp;
}
inline ConvSpec strip_conv_spec_h(index_t n, index_t in_ch, index_t out_ch) {
  ConvSpec sp;
  sp.in_ch = in_ch;
  sp.out_ch = out_ch;
  if (n == 1) {
    sp.kh = 1; sp.kw = 3; sp.ph = 0; sp.pw = 1;
  } else {
    sp.kh = 3; sp.kw = 3; sp.ph = 1; sp.pw = 1;
  }
  return sp;
}
inline ConvSpec conv3x3_spec(index_t in_ch, index_t out_ch, index_t dilation = 1) {
  ConvSpec sp;
  sp.in_ch = in_ch;
  sp.out_ch = out_ch;
  sp.kh = sp.kw = 3;
  sp.dh = sp.dw = dilation;
  sp.ph = sp.pw = dilation;  // padding = dilation keeps spatial extents
  return sp;
}
inline ConvSpec conv1x1_spec(index_t in_ch, index_t out_ch) {
  ConvSpec sp;
  sp.in_ch = in_ch;
  sp.out_ch = out_ch;
  return sp;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// parameter blocks
// ---------------------------------------------------------------------------

// SP mask: n = 1 strip pair, 1-D convs, fused sum, 1x1 conv, sigmoid.
template <class S>
struct SpParams {
  ConvParams<S> conv_v, conv_h;  // 1-D kernel 3, C -> C
  ConvParams<S> f1;              // 1x1, C -> C

  SpParams() = default;
  explicit SpParams(index_t c)
      : conv_v(detail::strip_conv_spec_v(1, c, c)),
        conv_h(detail::strip_conv_spec_h(1, c, c)),
        f1(detail::conv1x1_spec(c, c)) {}

  template <class F>
  void visit(F&& f) {
    f(conv_v); f(conv_h); f(f1);
  }
};

// MKSP: one strip-conv pair per scale (each C -> C/2), then a two-conv mask
// head on the |ns|*C/2-channel concatenation.
template <class S>
struct MkspParams {
  KernelSet ks;
  std::vector<ConvParams<S>> conv_v, conv_h;  // per scale, C -> C/2
  ConvParams<S> f_out1;                       // 3x3, |ns|*C/2 -> C (ReLU)
  ConvParams<S> f_out2;                       // 3x3, C -> C (sigmoid)

  MkspParams() = default;
  MkspParams(index_t c, KernelSet kernel_set) : ks(std::move(kernel_set)) {
    if (c % 2 != 0) throw ShapeError("MkspParams: channel count must be even");
    const index_t half = c / 2;
    for (index_t n : ks.ns) {
      conv_v.emplace_back(detail::strip_conv_spec_v(n, c, half));
      conv_h.emplace_back(detail::strip_conv_spec_h(n, c, half));
    }
    f_out1 = ConvParams<S>(detail::conv3x3_spec(static_cast<index_t>(ks.ns.size()) * half, c));
    f_out2 = ConvParams<S>(detail::conv3x3_spec(c, c));
  }

  template <class F>
  void visit(F&& f) {
    for (auto& p : conv_v) f(p);
    for (auto& p : conv_h) f(p);
    f(f_out1); f(f_out2);
  }
};

// Attention refinement: one 3x3 conv producing a single-channel sigmoid mask
// that gates all channels.
template <class S>
struct ArParams {
  ConvParams<S> conv;  // 3x3, C -> 1

  ArParams() = default;
  explicit ArParams(index_t c) : conv(detail::conv3x3_spec(c, 1)) {}

  template <class F>
  void visit(F&& f) {
    f(conv);
  }
};

template <class S>
struct BaParams {
  MkspParams<S> mksp;
  ArParams<S> ar;

  BaParams() = default;
  BaParams(index_t c, KernelSet ks) : mksp(c, std::move(ks)), ar(c) {}

  template <class F>
  void visit(F&& f) {
    mksp.visit(f); ar.visit(f);
  }
};

// Gradient mirrors, same visitation order as the parameter structs.
template <class S>
struct SpGrads {
  ConvGrads<S> conv_v, conv_h, f1;
  SpGrads() = default;
  explicit SpGrads(const SpParams<S>& p)
      : conv_v(p.conv_v.spec), conv_h(p.conv_h.spec), f1(p.f1.spec) {}

  template <class F>
  void visit(F&& f) {
    f(conv_v); f(conv_h); f(f1);
  }
};

template <class S>
struct MkspGrads {
  std::vector<ConvGrads<S>> conv_v, conv_h;
  ConvGrads<S> f_out1, f_out2;
  MkspGrads() = default;
  explicit MkspGrads(const MkspParams<S>& p) : f_out1(p.f_out1.spec), f_out2(p.f_out2.spec) {
    for (const auto& cp : p.conv_v) conv_v.emplace_back(cp.spec);
    for (const auto& cp : p.conv_h) conv_h.emplace_back(cp.spec);
  }

  template <class F>
  void visit(F&& f) {
    for (auto& g : conv_v) f(g);
    for (auto& g : conv_h) f(g);
    f(f_out1); f(f_out2);
  }
};

template <class S>
struct ArGrads {
  ConvGrads<S> conv;
  ArGrads() = default;
  explicit ArGrads(const ArParams<S>& p) : conv(p.conv.spec) {}

  template <class F>
  void visit(F&& f) {
    f(conv);
  }
};

template <class S>
struct BaGrads {
  MkspGrads<S> mksp;
  ArGrads<S> ar;
  BaGrads() = default;
  explicit BaGrads(const BaParams<S>& p) : mksp(p.mksp), ar(p.ar) {}

  template <class F>
  void visit(F&& f) {
    mksp.visit(f); ar.visit(f);
  }
};

// ---------------------------------------------------------------------------
// strip pooling primitives
// ---------------------------------------------------------------------------

template <class S>
std::pair<Tensor<S>, Tensor<S>> strip_pair(const Tensor<S>& x, index_t n) {
  if (n < 1 || n > x.shape().h || n > x.shape().w)
    throw ShapeError("strip_pair: scale " + std::to_string(n) + " out of range for " +
                     x.shape().str());
  return {adaptive_avg_pool2d(x, x.shape().h, n), adaptive_avg_pool2d(x, n, x.shape().w)};
}

// Strip fusion: out[i,j,c] = yv[i, floor(n*j/w), c] + yh[floor(n*i/h), j, c].
template <class S>
Tensor<S> mksp_fuse(const Tensor<S>& yv, const Tensor<S>& yh, index_t n, index_t h, index_t w) {
  const Shape4 vs = yv.shape(), hs = yh.shape();
  if (vs.h != h || vs.w != n || hs.h != n || hs.w != w || vs.c != hs.c || vs.n != hs.n)
    throw ShapeError("mksp_fuse: strip tensor shapes " + vs.str() + " / " + hs.str() +
                     " inconsistent with n=" + std::to_string(n));
  Tensor<S> out(Shape4{vs.n, vs.c, h, w});
  for (index_t b = 0; b < vs.n; ++b)
    for (index_t c = 0; c < vs.c; ++c)
      for (index_t i = 0; i < h; ++i) {
        const S* vrow = yv.data() + ((b * vs.c + c) * h + i) * n;
        const S* hrow = yh.data() + ((b * vs.c + c) * n + (n * i) / h) * w;
        S* orow = out.data() + ((b * vs.c + c) * h + i) * w;
        for (index_t j = 0; j < w; ++j) orow[j] = vrow[(n * j) / w] + hrow[j];
      }
  return out;
}

template <class S>
void mksp_fuse_backward(const Tensor<S>& g, index_t n, Tensor<S>& gyv, Tensor<S>& gyh) {
  const Shape4 gs = g.shape();
  gyv = Tensor<S>(Shape4{gs.n, gs.c, gs.h, n});
  gyh = Tensor<S>(Shape4{gs.n, gs.c, n, gs.w});
  for (index_t b = 0; b < gs.n; ++b)
    for (index_t c = 0; c < gs.c; ++c)
      for (index_t i = 0; i < gs.h; ++i) {
        const S* grow = g.data() + ((b * gs.c + c) * gs.h + i) * gs.w;
        S* vrow = gyv.data() + ((b * gs.c + c) * gs.h + i) * n;
        S* hrow = gyh.data() + ((b * gs.c + c) * n + (n * i) / gs.h) * gs.w;
        for (index_t j = 0; j < gs.w; ++j) {
          vrow[(n * j) / gs.w] += grow[j];
          hrow[j] += grow[j];
        }
      }
}

// ---------------------------------------------------------------------------
// SP mask
// ---------------------------------------------------------------------------

template <class S>
struct SpCtx {
  Shape4 x_shape;
  Tensor<S> yv, yh;      // pooled strips (conv inputs)
  Tensor<S> mask;        // sigmoid output
};

template <class S>
Tensor<S> sp_mask(const Tensor<S>& x, const SpParams<S>& p, SpCtx<S>* ctx = nullptr) {
  auto [yv, yh] = strip_pair(x, 1);
  Tensor<S> yv_c = conv2d(yv, p.conv_v);
  Tensor<S> yh_c = conv2d(yh, p.conv_h);
  Tensor<S> fused = mksp_fuse(yv_c, yh_c, 1, x.shape().h, x.shape().w);
  Tensor<S> mask = sigmoid(conv2d(fused, p.f1));
  if (ctx) {
    ctx->x_shape = x.shape();
    ctx->yv = std::move(yv);
    ctx->yh = std::move(yh);
    ctx->mask = mask;
  }
  return mask;
}

template <class S>
Tensor<S> sp_mask_backward(const SpCtx<S>& ctx, const SpParams<S>& p, const Tensor<S>& g_mask,
                           SpGrads<S>& g) {
  // Recompute the cheap intermediates (strip-sized) instead of storing them.
  Tensor<S> yv_c = conv2d(ctx.yv, p.conv_v);
  Tensor<S> yh_c = conv2d(ctx.yh, p.conv_h);
  Tensor<S> fused = mksp_fuse(yv_c, yh_c, 1, ctx.x_shape.h, ctx.x_shape.w);
  Tensor<S> gz = sigmoid_backward(ctx.mask, g_mask);
  Tensor<S> g_fused = conv2d_backward(fused, p.f1, gz, g.f1);
  Tensor<S> g_yv_c, g_yh_c;
  mksp_fuse_backward(g_fused, index_t(1), g_yv_c, g_yh_c);
  Tensor<S> g_yv = conv2d_backward(ctx.yv, p.conv_v, g_yv_c, g.conv_v);
  Tensor<S> g_yh = conv2d_backward(ctx.yh, p.conv_h, g_yh_c, g.conv_h);
  Tensor<S> gx = adaptive_avg_pool2d_backward(ctx.x_shape, g_yv);
  accumulate(gx, adaptive_avg_pool2d_backward(ctx.x_shape, g_yh));
  return gx;
}

// ---------------------------------------------------------------------------
// MKSP mask
// ---------------------------------------------------------------------------

template <class S>
struct MkspCtx {
  Shape4 x_shape;
  std::vector<Tensor<S>> yv, yh;  // pooled strips per scale (conv inputs)
  Tensor<S> cat;                  // concatenated fused tensors (f_out1 input)
  Tensor<S> z1;                   // f_out1 output, pre-ReLU
  Tensor<S> mask;                 // sigmoid output
};

template <class S>
Tensor<S> mksp_mask(const Tensor<S>& x, const MkspParams<S>& p, MkspCtx<S>* ctx = nullptr) {
  p.ks.validate(std::min(x.shape().h, x.shape().w));
  const index_t h = x.shape().h, w = x.shape().w;
  std::vector<Tensor<S>> fused;
  std::vector<Tensor<S>> yvs, yhs;
  for (size_t k = 0; k < p.ks.ns.size(); ++k) {
    const index_t n = p.ks.ns[k];
    auto [yv, yh] = strip_pair(x, n);
    Tensor<S> yv_c = conv2d(yv, p.conv_v[k]);
    Tensor<S> yh_c = conv2d(yh, p.conv_h[k]);
    fused.push_back(mksp_fuse(yv_c, yh_c, n, h, w));
    if (ctx) {
      yvs.push_back(std::move(yv));
      yhs.push_back(std::move(yh));
    }
  }
  Tensor<S> cat = concat_channels(fused);
  fused.clear();
  Tensor<S> z1 = conv2d(cat, p.f_out1);
  Tensor<S> t1 = relu(z1);
  Tensor<S> mask = sigmoid(conv2d(t1, p.f_out2));
  if (ctx) {
    ctx->x_shape = x.shape();
    ctx->yv = std::move(yvs);
    ctx->yh = std::move(yhs);
    ctx->cat = std::move(cat);
    ctx->z1 = std::move(z1);
    ctx->mask = mask;
  }
  return mask;
}

template <class S>
Tensor<S> mksp_mask_backward(const MkspCtx<S>& ctx, const MkspParams<S>& p,
                             const Tensor<S>& g_mask, MkspGrads<S>& g) {
  Tensor<S> t1 = relu(ctx.z1);
  Tensor<S> g_m = sigmoid_backward(ctx.mask, g_mask);
  Tensor<S> g_t1 = conv2d_backward(t1, p.f_out2, g_m, g.f_out2);
  Tensor<S> g_z1 = relu_backward(ctx.z1, g_t1);
  Tensor<S> g_cat = conv2d_backward(ctx.cat, p.f_out1, g_z1, g.f_out1);

  const index_t half = p.f_out2.spec.out_ch / 2;
  std::vector<index_t> sizes(p.ks.ns.size(), half);
  std::vector<Tensor<S>> g_fused = split_channels(g_cat, sizes);

  Tensor<S> gx(ctx.x_shape);
  for (size_t k = 0; k < p.ks.ns.size(); ++k) {
    const index_t n = p.ks.ns[k];
    Tensor<S> g_yv_c, g_yh_c;
    mksp_fuse_backward(g_fused[k], n, g_yv_c, g_yh_c);
    Tensor<S> g_yv = conv2d_backward(ctx.yv[k], p.conv_v[k], g_yv_c, g.conv_v[k]);
    Tensor<S> g_yh = conv2d_backward(ctx.yh[k], p.conv_h[k], g_yh_c, g.conv_h[k]);
    accumulate(gx, adaptive_avg_pool2d_backward(ctx.x_shape, g_yv));
    accumulate(gx, adaptive_avg_pool2d_backward(ctx.x_shape, g_yh));
  }
  return gx;
}

// ---------------------------------------------------------------------------
// AR gate: x -> sigmoid(conv3x3(x)) (x) x, single-channel mask broadcast
// ---------------------------------------------------------------------------

template <class S>
struct ArCtx {
  Tensor<S> x;     // gate-conv input
  Tensor<S> mask;  // sigmoid output, (n,1,h,w)
};

template <class S>
Tensor<S> ar_gate(const Tensor<S>& x, const ArParams<S>& p, ArCtx<S>* ctx = nullptr) {
  Tensor<S> mask = sigmoid(conv2d(x, p.conv));
  Tensor<S> out = eltwise_mul(x, mask);
  if (ctx) {
    ctx->x = x;
    ctx->mask = mask;
  }
  return out;
}

template <class S>
Tensor<S> ar_gate_backward(const ArCtx<S>& ctx, const ArParams<S>& p, const Tensor<S>& gy,
                           ArGrads<S>& g) {
  Tensor<S> gx, g_mask;
  eltwise_mul_backward(ctx.x, ctx.mask, gy, gx, g_mask);
  Tensor<S> g_pre = sigmoid_backward(ctx.mask, g_mask);
  accumulate(gx, conv2d_backward(ctx.x, p.conv, g_pre, g.conv));
  return gx;
}

// ---------------------------------------------------------------------------
// BA block: x~ = M_mksp (x) x; out = f_AR(x~) (x) x~
// ---------------------------------------------------------------------------

template <class S>
struct BaCtx {
  Tensor<S> x;
  MkspCtx<S> mksp;
  Tensor<S> xt;  // gated features x~
  ArCtx<S> ar;
};

template <class S>
struct BaOut {
  Tensor<S> out;
  Tensor<S> m_mksp;  // pre-multiplication masks, for visualization
  Tensor<S> m_ar;
};

template <class S>
BaOut<S> ba_forward(const Tensor<S>& x, const BaParams<S>& p, BaCtx<S>* ctx = nullptr) {
  MkspCtx<S> mctx;
  Tensor<S> mask = mksp_mask(x, p.mksp, ctx ? &mctx : nullptr);
  Tensor<S> xt = eltwise_mul(x, mask);
  ArCtx<S> actx;
  Tensor<S> out = ar_gate(xt, p.ar, &actx);
  BaOut<S> r{std::move(out), std::move(mask), actx.mask};
  if (ctx) {
    ctx->x = x;
    ctx->mksp = std::move(mctx);
    ctx->xt = std::move(xt);
    ctx->ar = std::move(actx);
  }
  return r;
}

template <class S>
Tensor<S> ba_backward(const BaCtx<S>& ctx, const BaParams<S>& p, const Tensor<S>& gy,
                      BaGrads<S>& g) {
  Tensor<S> g_xt = ar_gate_backward(ctx.ar, p.ar, gy, g.ar);
  Tensor<S> gx, g_mask;
  eltwise_mul_backward(ctx.x, ctx.mksp.mask, g_xt, gx, g_mask);
  accumulate(gx, mksp_mask_backward(ctx.mksp, p.mksp, g_mask, g.mksp));
  return gx;
}

}  // namespace banet
