#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "banet/attention.hpp"
#include "banet/ops.hpp"
#include "banet/rng.hpp"
#include "banet/tensor.hpp"

namespace banet {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

enum class Variant { net1, net2, net3, net4, net5, net6, full };

// Convolutional trunk of a BAM: PDC with projection, two PDCs in series, or
// the cascaded form with a bridge conv.
enum class ConvBlockKind { pdc, pdc_squared, cpdc };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::net1: return "net1";
    case Variant::net2: return "net2";
    case Variant::net3: return "net3";
    case Variant::net4: return "net4";
    case Variant::net5: return "net5";
    case Variant::net6: return "net6";
    case Variant::full: return "full";
  }
  return "?";
}

inline const char* to_string(ConvBlockKind k) {
  switch (k) {
    case ConvBlockKind::pdc: return "pdc";
    case ConvBlockKind::pdc_squared: return "pdc2";
    case ConvBlockKind::cpdc: return "cpdc";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::net1, Variant::net2, Variant::net3, Variant::net4, Variant::net5,
                    Variant::net6, Variant::full})
    if (s == to_string(v)) return v;
  throw ShapeError("unknown variant '" + s + "'");
}

inline ConvBlockKind conv_block_from_string(const std::string& s) {
  for (ConvBlockKind k : {ConvBlockKind::pdc, ConvBlockKind::pdc_squared, ConvBlockKind::cpdc})
    if (s == to_string(k)) return k;
  throw ShapeError("unknown conv block '" + s + "'");
}

inline ConvBlockKind default_conv_block(Variant v) {
  return (v == Variant::net6 || v == Variant::full) ? ConvBlockKind::cpdc : ConvBlockKind::pdc;
}

struct NetworkConfig {
  index_t base_channels = 128;  // 128 for BANet, 192 for BANet+
  index_t num_bams = 10;
  KernelSet kernel_set;
  Variant variant = Variant::full;
  std::optional<ConvBlockKind> conv_block;  // defaults per variant
  std::uint64_t seed = 0;

  ConvBlockKind block_kind() const { return conv_block.value_or(default_conv_block(variant)); }

  void validate() const {
    if (base_channels < 2 || base_channels % 2 != 0)
      throw ShapeError("NetworkConfig: base_channels must be even and >= 2");
    if (num_bams < 1) throw ShapeError("NetworkConfig: num_bams must be >= 1");
    kernel_set.validate(std::numeric_limits<index_t>::max() / 2);
    if (block_kind() == ConvBlockKind::pdc_squared && base_channels % 4 != 0)
      throw ShapeError("NetworkConfig: pdc2 block requires base_channels divisible by 4");
    if ((variant == Variant::net6 || variant == Variant::full) &&
        block_kind() != ConvBlockKind::cpdc)
      throw ShapeError("NetworkConfig: net6/full require the cpdc block");
  }

  bool operator==(const NetworkConfig& o) const {
    return base_channels == o.base_channels && num_bams == o.num_bams &&
           kernel_set.ns == o.kernel_set.ns && variant == o.variant &&
           block_kind() == o.block_kind() && seed == o.seed;
  }
};

// ---------------------------------------------------------------------------
// PDC family
// ---------------------------------------------------------------------------

// Three parallel dilated 3x3 convs (D = 1, 3, 5), each in -> in/2, ReLU,
// concatenated to 1.5x the input channels.
template <class S>
struct PdcParams {
  std::array<ConvParams<S>, 3> branch;

  PdcParams() = default;
  explicit PdcParams(index_t in_ch) {
    if (in_ch % 2 != 0) throw ShapeError("PdcParams: channel count must be even");
    const std::array<index_t, 3> dil{1, 3, 5};
    for (size_t i = 0; i < 3; ++i)
      branch[i] = ConvParams<S>(detail::conv3x3_spec(in_ch, in_ch / 2, dil[i]));
  }

  index_t out_ch() const { return 3 * branch[0].spec.out_ch; }

  template <class F>
  void visit(F&& f) {
    for (auto& b : branch) f(b);
  }
};

template <class S>
struct PdcGrads {
  std::array<ConvGrads<S>, 3> branch;
  PdcGrads() = default;
  explicit PdcGrads(const PdcParams<S>& p)
      : branch{ConvGrads<S>(p.branch[0].spec), ConvGrads<S>(p.branch[1].spec),
               ConvGrads<S>(p.branch[2].spec)} {}

  template <class F>
  void visit(F&& f) {
    for (auto& b : branch) f(b);
  }
};

template <class S>
struct PdcCtx {
  Tensor<S> x;
  std::array<Tensor<S>, 3> z;  // pre-ReLU branch outputs
};

template <class S>
Tensor<S> pdc_forward(const Tensor<S>& x, const PdcParams<S>& p, PdcCtx<S>* ctx = nullptr) {
  std::vector<Tensor<S>> parts;
  std::array<Tensor<S>, 3> zs;
  for (size_t i = 0; i < 3; ++i) {
    zs[i] = conv2d(x, p.branch[i]);
    parts.push_back(relu(zs[i]));
  }
  Tensor<S> out = concat_channels(parts);
  if (ctx) {
    ctx->x = x;
    ctx->z = std::move(zs);
  }
  return out;
}

template <class S>
Tensor<S> pdc_backward(const PdcCtx<S>& ctx, const PdcParams<S>& p, const Tensor<S>& gy,
                       PdcGrads<S>& g) {
  const index_t half = p.branch[0].spec.out_ch;
  std::vector<Tensor<S>> gparts = split_channels(gy, {half, half, half});
  Tensor<S> gx(ctx.x.shape());
  for (size_t i = 0; i < 3; ++i) {
    Tensor<S> gz = relu_backward(ctx.z[i], gparts[i]);
    accumulate(gx, conv2d_backward(ctx.x, p.branch[i], gz, g.branch[i]));
  }
  return gx;
}

// PDC trunk with projection back to C: pdc -> ReLU(bridge 1.5C->C) -> fuse
// (the cascaded block with its second PDC removed).
template <class S>
struct PdcBlockParams {
  PdcParams<S> pdc;
  ConvParams<S> bridge;  // 3x3, 1.5C -> C, ReLU
  ConvParams<S> fuse;    // 3x3, C -> C, linear

  PdcBlockParams() = default;
  explicit PdcBlockParams(index_t c)
      : pdc(c),
        bridge(detail::conv3x3_spec(c + c / 2, c)),
        fuse(detail::conv3x3_spec(c, c)) {}

  template <class F>
  void visit(F&& f) {
    pdc.visit(f); f(bridge); f(fuse);
  }
};

template <class S>
struct PdcBlockGrads {
  PdcGrads<S> pdc;
  ConvGrads<S> bridge, fuse;
  PdcBlockGrads() = default;
  explicit PdcBlockGrads(const PdcBlockParams<S>& p)
      : pdc(p.pdc), bridge(p.bridge.spec), fuse(p.fuse.spec) {}

  template <class F>
  void visit(F&& f) {
    pdc.visit(f); f(bridge); f(fuse);
  }
};

template <class S>
struct PdcBlockCtx {
  PdcCtx<S> pdc;
  Tensor<S> c1;  // pdc output
  Tensor<S> z;   // bridge output, pre-ReLU
};

template <class S>
Tensor<S> pdc_block_forward(const Tensor<S>& x, const PdcBlockParams<S>& p,
                            PdcBlockCtx<S>* ctx = nullptr) {
  PdcCtx<S> pctx;
  Tensor<S> c1 = pdc_forward(x, p.pdc, ctx ? &pctx : nullptr);
  Tensor<S> z = conv2d(c1, p.bridge);
  Tensor<S> out = conv2d(relu(z), p.fuse);
  if (ctx) {
    ctx->pdc = std::move(pctx);
    ctx->c1 = std::move(c1);
    ctx->z = std::move(z);
  }
  return out;
}

template <class S>
Tensor<S> pdc_block_backward(const PdcBlockCtx<S>& ctx, const PdcBlockParams<S>& p,
                             const Tensor<S>& gy, PdcBlockGrads<S>& g) {
  Tensor<S> t = relu(ctx.z);
  Tensor<S> gt = conv2d_backward(t, p.fuse, gy, g.fuse);
  Tensor<S> gz = relu_backward(ctx.z, gt);
  Tensor<S> gc1 = conv2d_backward(ctx.c1, p.bridge, gz, g.bridge);
  return pdc_backward(ctx.pdc, p.pdc, gc1, g.pdc);
}

// Two PDCs in series with a final projection (the PDC^2 ablation).
template <class S>
struct Pdc2Params {
  PdcParams<S> pdc1;  // C -> 1.5C
  PdcParams<S> pdc2;  // 1.5C -> 2.25C
  ConvParams<S> fuse; // 3x3, 2.25C -> C

  Pdc2Params() = default;
  explicit Pdc2Params(index_t c)
      : pdc1(c), pdc2(c + c / 2), fuse(detail::conv3x3_spec((c + c / 2) * 3 / 2, c)) {}

  template <class F>
  void visit(F&& f) {
    pdc1.visit(f); pdc2.visit(f); f(fuse);
  }
};

template <class S>
struct Pdc2Grads {
  PdcGrads<S> pdc1, pdc2;
  ConvGrads<S> fuse;
  Pdc2Grads() = default;
  explicit Pdc2Grads(const Pdc2Params<S>& p) : pdc1(p.pdc1), pdc2(p.pdc2), fuse(p.fuse.spec) {}

  template <class F>
  void visit(F&& f) {
    pdc1.visit(f); pdc2.visit(f); f(fuse);
  }
};

template <class S>
struct Pdc2Ctx {
  PdcCtx<S> pdc1, pdc2;
  Tensor<S> c1, c2;
};

template <class S>
Tensor<S> pdc2_forward(const Tensor<S>& x, const Pdc2Params<S>& p, Pdc2Ctx<S>* ctx = nullptr) {
  PdcCtx<S> c1ctx, c2ctx;
  Tensor<S> c1 = pdc_forward(x, p.pdc1, ctx ? &c1ctx : nullptr);
  Tensor<S> c2 = pdc_forward(c1, p.pdc2, ctx ? &c2ctx : nullptr);
  Tensor<S> out = conv2d(c2, p.fuse);
  if (ctx) {
    ctx->pdc1 = std::move(c1ctx);
    ctx->pdc2 = std::move(c2ctx);
    ctx->c1 = std::move(c1);
    ctx->c2 = std::move(c2);
  }
  return out;
}

template <class S>
Tensor<S> pdc2_backward(const Pdc2Ctx<S>& ctx, const Pdc2Params<S>& p, const Tensor<S>& gy,
                        Pdc2Grads<S>& g) {
  Tensor<S> gc2 = conv2d_backward(ctx.c2, p.fuse, gy, g.fuse);
  Tensor<S> gc1 = pdc_backward(ctx.pdc2, p.pdc2, gc2, g.pdc2);
  return pdc_backward(ctx.pdc1, p.pdc1, gc1, g.pdc1);
}

// CPDC: two PDCs bridged by a 3x3 conv, with a 3x3 fuse restoring C channels.
template <class S>
struct CpdcParams {
  PdcParams<S> pdc1;
  ConvParams<S> bridge;  // 3x3, 1.5C -> C, ReLU
  PdcParams<S> pdc2;
  ConvParams<S> fuse;    // 3x3, 1.5C -> C, linear

  CpdcParams() = default;
  explicit CpdcParams(index_t c)
      : pdc1(c),
        bridge(detail::conv3x3_spec(c + c / 2, c)),
        pdc2(c),
        fuse(detail::conv3x3_spec(c + c / 2, c)) {}

  template <class F>
  void visit(F&& f) {
    pdc1.visit(f); f(bridge); pdc2.visit(f); f(fuse);
  }
};

template <class S>
struct CpdcGrads {
  PdcGrads<S> pdc1, pdc2;
  ConvGrads<S> bridge, fuse;
  CpdcGrads() = default;
  explicit CpdcGrads(const CpdcParams<S>& p)
      : pdc1(p.pdc1), pdc2(p.pdc2), bridge(p.bridge.spec), fuse(p.fuse.spec) {}

  template <class F>
  void visit(F&& f) {
    pdc1.visit(f); f(bridge); pdc2.visit(f); f(fuse);
  }
};

template <class S>
struct CpdcCtx {
  PdcCtx<S> pdc1, pdc2;
  Tensor<S> c1;  // pdc1 output
  Tensor<S> z;   // bridge output, pre-ReLU
  Tensor<S> c2;  // pdc2 output
};

template <class S>
Tensor<S> cpdc_forward(const Tensor<S>& x, const CpdcParams<S>& p, CpdcCtx<S>* ctx = nullptr) {
  PdcCtx<S> p1ctx, p2ctx;
  Tensor<S> c1 = pdc_forward(x, p.pdc1, ctx ? &p1ctx : nullptr);
  Tensor<S> z = conv2d(c1, p.bridge);
  Tensor<S> c2 = pdc_forward(relu(z), p.pdc2, ctx ? &p2ctx : nullptr);
  Tensor<S> out = conv2d(c2, p.fuse);
  if (ctx) {
    ctx->pdc1 = std::move(p1ctx);
    ctx->pdc2 = std::move(p2ctx);
    ctx->c1 = std::move(c1);
    ctx->z = std::move(z);
    ctx->c2 = std::move(c2);
  }
  return out;
}

template <class S>
Tensor<S> cpdc_backward(const CpdcCtx<S>& ctx, const CpdcParams<S>& p, const Tensor<S>& gy,
                        CpdcGrads<S>& g) {
  Tensor<S> gc2 = conv2d_backward(ctx.c2, p.fuse, gy, g.fuse);
  Tensor<S> gt = pdc_backward(ctx.pdc2, p.pdc2, gc2, g.pdc2);
  Tensor<S> gz = relu_backward(ctx.z, gt);
  Tensor<S> gc1 = conv2d_backward(ctx.c1, p.bridge, gz, g.bridge);
  return pdc_backward(ctx.pdc1, p.pdc1, gc1, g.pdc1);
}

// ---------------------------------------------------------------------------
// BAM
// ---------------------------------------------------------------------------

template <class S>
struct BamParams {
  Variant variant = Variant::full;
  ConvBlockKind block = ConvBlockKind::cpdc;

  // attention stage (which fields exist depends on the variant)
  std::optional<BaParams<S>> ba;      // net5, net6, full
  std::optional<ArParams<S>> ar;      // net2
  std::optional<SpParams<S>> sp;      // net3
  std::optional<MkspParams<S>> mksp;  // net4

  // convolutional trunk
  std::optional<PdcBlockParams<S>> pdc_block;
  std::optional<Pdc2Params<S>> pdc2;
  std::optional<CpdcParams<S>> cpdc;

  BamParams() = default;
  BamParams(index_t c, const KernelSet& ks, Variant v, ConvBlockKind k) : variant(v), block(k) {
    switch (v) {
      case Variant::net1: break;
      case Variant::net2: ar.emplace(c); break;
      case Variant::net3: sp.emplace(c); break;
      case Variant::net4: mksp.emplace(c, ks); break;
      case Variant::net5:
      case Variant::net6:
      case Variant::full: ba.emplace(c, ks); break;
    }
    switch (k) {
      case ConvBlockKind::pdc: pdc_block.emplace(c); break;
      case ConvBlockKind::pdc_squared: pdc2.emplace(c); break;
      case ConvBlockKind::cpdc: cpdc.emplace(c); break;
    }
  }

  template <class F>
  void visit(F&& f) {
    if (ba) ba->visit(f);
    if (ar) ar->visit(f);
    if (sp) sp->visit(f);
    if (mksp) mksp->visit(f);
    if (pdc_block) pdc_block->visit(f);
    if (pdc2) pdc2->visit(f);
    if (cpdc) cpdc->visit(f);
  }
};

template <class S>
struct BamGrads {
  std::optional<BaGrads<S>> ba;
  std::optional<ArGrads<S>> ar;
  std::optional<SpGrads<S>> sp;
  std::optional<MkspGrads<S>> mksp;
  std::optional<PdcBlockGrads<S>> pdc_block;
  std::optional<Pdc2Grads<S>> pdc2;
  std::optional<CpdcGrads<S>> cpdc;

  BamGrads() = default;
  explicit BamGrads(const BamParams<S>& p) {
    if (p.ba) ba.emplace(*p.ba);
    if (p.ar) ar.emplace(*p.ar);
    if (p.sp) sp.emplace(*p.sp);
    if (p.mksp) mksp.emplace(*p.mksp);
    if (p.pdc_block) pdc_block.emplace(*p.pdc_block);
    if (p.pdc2) pdc2.emplace(*p.pdc2);
    if (p.cpdc) cpdc.emplace(*p.cpdc);
  }

  template <class F>
  void visit(F&& f) {
    if (ba) ba->visit(f);
    if (ar) ar->visit(f);
    if (sp) sp->visit(f);
    if (mksp) mksp->visit(f);
    if (pdc_block) pdc_block->visit(f);
    if (pdc2) pdc2->visit(f);
    if (cpdc) cpdc->visit(f);
  }
};

template <class S>
struct BamCtx {
  Tensor<S> x;
  std::optional<BaCtx<S>> ba;
  std::optional<ArCtx<S>> ar;
  std::optional<SpCtx<S>> sp;      // plus gated-mul operands below
  std::optional<MkspCtx<S>> mksp;
  Tensor<S> gated;                 // trunk input (= x for net1)
  std::optional<PdcBlockCtx<S>> pdc_block;
  std::optional<Pdc2Ctx<S>> pdc2;
  std::optional<CpdcCtx<S>> cpdc;
};

// Pre-multiplication attention masks of one BAM, for visualization dumps.
template <class S>
struct BamMasks {
  std::optional<Tensor<S>> m_mksp;
  std::optional<Tensor<S>> m_ar;
};

template <class S>
Tensor<S> bam_forward(const Tensor<S>& x, const BamParams<S>& p, BamCtx<S>* ctx = nullptr,
                      BamMasks<S>* masks = nullptr) {
  Tensor<S> gated;
  switch (p.variant) {
    case Variant::net1:
      gated = x;
      break;
    case Variant::net2: {
      ArCtx<S> actx;
      gated = ar_gate(x, *p.ar, (ctx || masks) ? &actx : nullptr);
      if (masks) masks->m_ar = actx.mask;
      if (ctx) ctx->ar = std::move(actx);
      break;
    }
    case Variant::net3: {
      SpCtx<S> sctx;
      Tensor<S> mask = sp_mask(x, *p.sp, (ctx || masks) ? &sctx : nullptr);
      gated = eltwise_mul(x, mask);
      if (masks) masks->m_mksp = mask;
      if (ctx) ctx->sp = std::move(sctx);
      break;
    }
    case Variant::net4: {
      MkspCtx<S> mctx;
      Tensor<S> mask = mksp_mask(x, *p.mksp, (ctx || masks) ? &mctx : nullptr);
      gated = eltwise_mul(x, mask);
      if (masks) masks->m_mksp = mask;
      if (ctx) ctx->mksp = std::move(mctx);
      break;
    }
    case Variant::net5:
    case Variant::net6:
    case Variant::full: {
      BaCtx<S> bctx;
      BaOut<S> bo = ba_forward(x, *p.ba, (ctx || masks) ? &bctx : nullptr);
      gated = std::move(bo.out);
      if (masks) {
        masks->m_mksp = std::move(bo.m_mksp);
        masks->m_ar = std::move(bo.m_ar);
      }
      if (ctx) ctx->ba = std::move(bctx);
      break;
    }
  }

  Tensor<S> trunk;
  switch (p.block) {
    case ConvBlockKind::pdc: {
      PdcBlockCtx<S> bctx;
      trunk = pdc_block_forward(gated, *p.pdc_block, ctx ? &bctx : nullptr);
      if (ctx) ctx->pdc_block = std::move(bctx);
      break;
    }
    case ConvBlockKind::pdc_squared: {
      Pdc2Ctx<S> bctx;
      trunk = pdc2_forward(gated, *p.pdc2, ctx ? &bctx : nullptr);
      if (ctx) ctx->pdc2 = std::move(bctx);
      break;
    }
    case ConvBlockKind::cpdc: {
      CpdcCtx<S> bctx;
      trunk = cpdc_forward(gated, *p.cpdc, ctx ? &bctx : nullptr);
      if (ctx) ctx->cpdc = std::move(bctx);
      break;
    }
  }

  Tensor<S> out = eltwise_add(x, trunk);
  if (ctx) {
    ctx->x = x;
    ctx->gated = std::move(gated);
  }
  return out;
}

template <class S>
Tensor<S> bam_backward(const BamCtx<S>& ctx, const BamParams<S>& p, const Tensor<S>& gy,
                       BamGrads<S>& g) {
  Tensor<S> g_trunk;
  switch (p.block) {
    case ConvBlockKind::pdc:
      g_trunk = pdc_block_backward(*ctx.pdc_block, *p.pdc_block, gy, *g.pdc_block);
      break;
    case ConvBlockKind::pdc_squared:
      g_trunk = pdc2_backward(*ctx.pdc2, *p.pdc2, gy, *g.pdc2);
      break;
    case ConvBlockKind::cpdc:
      g_trunk = cpdc_backward(*ctx.cpdc, *p.cpdc, gy, *g.cpdc);
      break;
  }

  Tensor<S> gx = gy;  // residual path
  switch (p.variant) {
    case Variant::net1:
      accumulate(gx, g_trunk);
      break;
    case Variant::net2:
      accumulate(gx, ar_gate_backward(*ctx.ar, *p.ar, g_trunk, *g.ar));
      break;
    case Variant::net3: {
      Tensor<S> g_xdir, g_mask;
      eltwise_mul_backward(ctx.x, ctx.sp->mask, g_trunk, g_xdir, g_mask);
      accumulate(gx, g_xdir);
      accumulate(gx, sp_mask_backward(*ctx.sp, *p.sp, g_mask, *g.sp));
      break;
    }
    case Variant::net4: {
      Tensor<S> g_xdir, g_mask;
      eltwise_mul_backward(ctx.x, ctx.mksp->mask, g_trunk, g_xdir, g_mask);
      accumulate(gx, g_xdir);
      accumulate(gx, mksp_mask_backward(*ctx.mksp, *p.mksp, g_mask, *g.mksp));
      break;
    }
    case Variant::net5:
    case Variant::net6:
    case Variant::full:
      accumulate(gx, ba_backward(*ctx.ba, *p.ba, g_trunk, *g.ba));
      break;
  }
  return gx;
}

// ---------------------------------------------------------------------------
// BANet
// ---------------------------------------------------------------------------

template <class S>
struct BanetParams {
  NetworkConfig cfg;
  ConvParams<S> head1;             // 3x3, 3 -> C, stride 1, full res
  ConvParams<S> head2;             // 3x3, C -> C, stride 2
  std::vector<BamParams<S>> bams;
  ConvParams<S> up;                // transposed 4x4, C -> C, stride 2
  ConvParams<S> tail;              // 3x3, C -> 3, linear

  BanetParams() = default;
  explicit BanetParams(const NetworkConfig& c) : cfg(c) {
    cfg.validate();
    const index_t ch = cfg.base_channels;
    head1 = ConvParams<S>(detail::conv3x3_spec(3, ch));
    ConvSpec h2 = detail::conv3x3_spec(ch, ch);
    h2.sh = h2.sw = 2;
    head2 = ConvParams<S>(h2);
    for (index_t i = 0; i < cfg.num_bams; ++i)
      bams.emplace_back(ch, cfg.kernel_set, cfg.variant, cfg.block_kind());
    ConvSpec upspec;
    upspec.in_ch = ch; upspec.out_ch = ch;
    upspec.kh = upspec.kw = 4;
    upspec.sh = upspec.sw = 2;
    upspec.ph = upspec.pw = 1;
    up = ConvParams<S>(upspec);
    tail = ConvParams<S>(detail::conv3x3_spec(ch, 3));
  }

  template <class F>
  void visit(F&& f) {
    f(head1); f(head2);
    for (auto& b : bams) b.visit(f);
    f(up); f(tail);
  }
};

template <class S>
struct BanetGrads {
  ConvGrads<S> head1, head2;
  std::vector<BamGrads<S>> bams;
  ConvGrads<S> up, tail;

  BanetGrads() = default;
  explicit BanetGrads(const BanetParams<S>& p)
      : head1(p.head1.spec), head2(p.head2.spec), up(p.up.spec), tail(p.tail.spec) {
    for (const auto& b : p.bams) bams.emplace_back(b);
  }

  template <class F>
  void visit(F&& f) {
    f(head1); f(head2);
    for (auto& b : bams) b.visit(f);
    f(up); f(tail);
  }
};

template <class S>
struct BanetCtx {
  Tensor<S> img;
  Tensor<S> z1, z2;  // head conv outputs, pre-ReLU
  Tensor<S> h1;      // relu(z1), head2 input
  std::vector<BamCtx<S>> bams;
  Tensor<S> trunk_out;  // last BAM output, input to `up`
  Tensor<S> zu;      // up output, pre-ReLU
  Tensor<S> u;       // relu(zu), tail input
};

template <class S>
Tensor<S> banet_forward(const Tensor<S>& img, const BanetParams<S>& p, BanetCtx<S>* ctx = nullptr,
                        std::vector<BamMasks<S>>* masks = nullptr) {
  if (img.shape().c != 3)
    throw ShapeError("banet_forward: expected a 3-channel image, got " + img.shape().str());
  if (img.shape().h % 2 != 0 || img.shape().w % 2 != 0)
    throw ShapeError("banet_forward: spatial dims must be even (pad the input), got " +
                     img.shape().str());

  // center the head input; zero-mean features condition the optimization far
  // better than raw [0,1] pixels (the global skip below still adds raw img)
  Tensor<S> centered = img;
  for (index_t i = 0; i < centered.size(); ++i) centered[i] -= S(0.5);

  Tensor<S> z1 = conv2d(centered, p.head1);
  Tensor<S> h1 = relu(z1);
  Tensor<S> z2 = conv2d(h1, p.head2);
  Tensor<S> t = relu(z2);

  if (ctx) {
    ctx->img = std::move(centered);
    ctx->z1 = std::move(z1);
    ctx->h1 = std::move(h1);
    ctx->z2 = std::move(z2);
    ctx->bams.resize(p.bams.size());
  }
  if (masks) masks->resize(p.bams.size());

  for (size_t i = 0; i < p.bams.size(); ++i)
    t = bam_forward(t, p.bams[i], ctx ? &ctx->bams[i] : nullptr, masks ? &(*masks)[i] : nullptr);

  Tensor<S> zu = conv_transpose2d(t, p.up);
  Tensor<S> u = relu(zu);
  Tensor<S> y = conv2d(u, p.tail);
  Tensor<S> out = eltwise_add(img, y);
  if (ctx) {
    ctx->trunk_out = std::move(t);
    ctx->zu = std::move(zu);
    ctx->u = std::move(u);
  }
  return out;
}

template <class S>
Tensor<S> banet_backward(const BanetCtx<S>& ctx, const BanetParams<S>& p, const Tensor<S>& gy,
                         BanetGrads<S>& g) {
  Tensor<S> gu = conv2d_backward(ctx.u, p.tail, gy, g.tail);
  Tensor<S> gzu = relu_backward(ctx.zu, gu);
  Tensor<S> gt = conv_transpose2d_backward(ctx.trunk_out, p.up, gzu, g.up);
  for (size_t i = p.bams.size(); i-- > 0;)
    gt = bam_backward(ctx.bams[i], p.bams[i], gt, g.bams[i]);
  Tensor<S> gz2 = relu_backward(ctx.z2, gt);
  Tensor<S> gh1 = conv2d_backward(ctx.h1, p.head2, gz2, g.head2);
  Tensor<S> gz1 = relu_backward(ctx.z1, gh1);
  Tensor<S> gimg = conv2d_backward(ctx.img, p.head1, gz1, g.head1);
  accumulate(gimg, gy);  // global input -> output residual
  return gimg;
}

// ---------------------------------------------------------------------------
// parameter flattening (visitation order defines the canonical layout)
// ---------------------------------------------------------------------------

template <class S, class Visitable>
index_t num_scalars(Visitable& v) {
  index_t total = 0;
  v.visit([&](auto& cp) {
    total += cp.weight.size() + static_cast<index_t>(cp.bias.size());
  });
  return total;
}

template <class S, class Visitable>
std::vector<S> flatten(Visitable& v) {
  std::vector<S> flat;
  v.visit([&](auto& cp) {
    flat.insert(flat.end(), cp.weight.vec().begin(), cp.weight.vec().end());
    flat.insert(flat.end(), cp.bias.begin(), cp.bias.end());
  });
  return flat;
}

template <class S, class Visitable>
void unflatten(Visitable& v, const std::vector<S>& flat) {
  size_t off = 0;
  v.visit([&](auto& cp) {
    std::copy(flat.begin() + off, flat.begin() + off + cp.weight.vec().size(),
              cp.weight.vec().begin());
    off += cp.weight.vec().size();
    std::copy(flat.begin() + off, flat.begin() + off + cp.bias.size(), cp.bias.begin());
    off += cp.bias.size();
  });
  if (off != flat.size()) throw ShapeError("unflatten: flat vector length mismatch");
}

// ---------------------------------------------------------------------------
// builder
// ---------------------------------------------------------------------------

// Deterministic fan-in-scaled uniform init: w ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)),
// biases zero, draws consumed in visitation order.
template <class S>
BanetParams<S> build_network(const NetworkConfig& cfg) {
  BanetParams<S> p(cfg);
  Rng rng(cfg.seed ^ 0x42414e45ULL);
  p.visit([&](ConvParams<S>& cp) {
    const double fan_in = static_cast<double>(cp.spec.in_ch * cp.spec.kh * cp.spec.kw);
    const double bound = std::sqrt(1.0 / fan_in);
    for (S& w : cp.weight.vec()) w = static_cast<S>(rng.uniform(-bound, bound));
    std::fill(cp.bias.begin(), cp.bias.end(), S(0));
  });
  return p;
}

// ---------------------------------------------------------------------------
// analytic parameter / FLOP accounting
// ---------------------------------------------------------------------------

namespace detail {

struct LayerCost {
  ConvSpec spec;
  index_t in_h = 0, in_w = 0;
  bool transposed = false;
};

// Enumerates every convolution of the network for an input of h x w,
// mirroring the parameter constructors layer for layer.
inline std::vector<LayerCost> conv_layers(const NetworkConfig& cfg, index_t h, index_t w) {
  cfg.validate();
  const index_t c = cfg.base_channels;
  const index_t h2 = h / 2, w2 = w / 2;
  std::vector<LayerCost> ls;
  auto add = [&](const ConvSpec& sp, index_t ih, index_t iw, bool tr = false) {
    ls.push_back({sp, ih, iw, tr});
  };

  add(conv3x3_spec(3, c), h, w);
  ConvSpec head2 = conv3x3_spec(c, c);
  head2.sh = head2.sw = 2;
  add(head2, h, w);

  auto add_mksp = [&](index_t ch) {
    const index_t half = ch / 2;
    for (index_t n : cfg.kernel_set.ns) {
      add(strip_conv_spec_v(n, ch, half), h2, n);
      add(strip_conv_spec_h(n, ch, half), n, w2);
    }
    add(conv3x3_spec(static_cast<index_t>(cfg.kernel_set.ns.size()) * half, ch), h2, w2);
    add(conv3x3_spec(ch, ch), h2, w2);
  };
  auto add_pdc = [&](index_t in_ch) {
    for (index_t d : {1, 3, 5}) add(conv3x3_spec(in_ch, in_ch / 2, d), h2, w2);
  };

  for (index_t i = 0; i < cfg.num_bams; ++i) {
    switch (cfg.variant) {
      case Variant::net1: break;
      case Variant::net2: add(conv3x3_spec(c, 1), h2, w2); break;
      case Variant::net3:
        add(strip_conv_spec_v(1, c, c), h2, 1);
        add(strip_conv_spec_h(1, c, c), 1, w2);
        add(conv1x1_spec(c, c), h2, w2);
        break;
      case Variant::net4: add_mksp(c); break;
      case Variant::net5:
      case Variant::net6:
      case Variant::full:
        add_mksp(c);
        add(conv3x3_spec(c, 1), h2, w2);
        break;
    }
    switch (cfg.block_kind()) {
      case ConvBlockKind::pdc:
        add_pdc(c);
        add(conv3x3_spec(c + c / 2, c), h2, w2);
        add(conv3x3_spec(c, c), h2, w2);
        break;
      case ConvBlockKind::pdc_squared: {
        add_pdc(c);
        const index_t mid = c + c / 2;
        for (index_t d : {1, 3, 5}) add(conv3x3_spec(mid, mid / 2, d), h2, w2);
        add(conv3x3_spec(mid * 3 / 2, c), h2, w2);
        break;
      }
      case ConvBlockKind::cpdc:
        add_pdc(c);
        add(conv3x3_spec(c + c / 2, c), h2, w2);
        add_pdc(c);
        add(conv3x3_spec(c + c / 2, c), h2, w2);
        break;
    }
  }

  ConvSpec up;
  up.in_ch = c; up.out_ch = c;
  up.kh = up.kw = 4; up.sh = up.sw = 2; up.ph = up.pw = 1;
  add(up, h2, w2, true);
  add(conv3x3_spec(c, 3), h2 * 2, w2 * 2);
  return ls;
}

}  // namespace detail

// Exact learnable-scalar count of the network a config describes.
inline index_t count_params(const NetworkConfig& cfg) {
  index_t total = 0;
  for (const auto& l : detail::conv_layers(cfg, 16, 16)) total += l.spec.param_count();
  return total;
}

// Analytic FLOP count (2 FLOPs per multiply-add) for one forward pass at the
// given input resolution. Convolutions dominate; pooling, fusion, gating and
// activations are included with one FLOP per scalar op.
inline index_t count_flops(const NetworkConfig& cfg, index_t h, index_t w) {
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("count_flops: resolution must be even");
  index_t total = 0;
  for (const auto& l : detail::conv_layers(cfg, h, w)) {
    const ConvSpec& sp = l.spec;
    if (l.transposed) {
      total += 2 * (l.in_h * l.in_w * sp.in_ch) * (sp.out_ch * sp.kh * sp.kw);
      total += sp.tout_h(l.in_h) * sp.tout_w(l.in_w) * sp.out_ch;  // bias
    } else {
      const index_t out_elems = sp.out_h(l.in_h) * sp.out_w(l.in_w) * sp.out_ch;
      total += 2 * out_elems * (sp.in_ch * sp.kh * sp.kw);
      total += out_elems;  // bias
    }
  }

  const index_t c = cfg.base_channels;
  const index_t h2 = h / 2, w2 = w / 2;
  const index_t plane = h2 * w2;
  index_t per_bam = 0;
  auto pool_cost = [&](index_t oh, index_t ow) {
    index_t sv, kv, sh, kh;
    adaptive_pool_law(h2, oh, sv, kv);
    adaptive_pool_law(w2, ow, sh, kh);
    return oh * ow * c * (kv * kh + 1);
  };
  auto mksp_extra = [&]() {
    index_t f = 0;
    for (index_t n : cfg.kernel_set.ns) {
      f += pool_cost(h2, n) + pool_cost(n, w2);
      f += plane * (c / 2);  // strip-fusion adds
    }
    f += 5 * plane * c;  // ReLU + sigmoid(4) on the mask head
    f += plane * c;      // gating multiply
    return f;
  };
  switch (cfg.variant) {
    case Variant::net1: break;
    case Variant::net2: per_bam += 5 * plane + plane * c; break;  // sigmoid + gate
    case Variant::net4: per_bam += mksp_extra(); break;
    case Variant::net3:
      per_bam += pool_cost(h2, 1) + pool_cost(1, w2) + plane * c /*fuse*/ +
                 4 * plane * c /*sigmoid*/ + plane * c /*gate*/;
      break;
    case Variant::net5:
    case Variant::net6:
    case Variant::full:
      per_bam += mksp_extra();
      per_bam += 5 * plane + plane * c;  // AR sigmoid + gate
      break;
  }
  per_bam += plane * c;  // residual add
  // branch/bridge ReLUs
  const index_t relu_elems = (cfg.block_kind() == ConvBlockKind::cpdc) ? 4 * plane * (c / 2) + plane * c
                                                                       : 3 * plane * (c / 2) + plane * c;
  per_bam += relu_elems;
  total += cfg.num_bams * per_bam;
  total += 2 * h * w * (3 + cfg.base_channels);  // head/tail ReLUs + global residual
  return total;
}

}  // namespace banet
