#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "banet/ops.hpp"
#include "banet/tensor.hpp"

namespace banet {

struct LossConfig {
  double epsilon = 1e-3;
  double lambda = 0.01;

  void validate() const {
    if (epsilon <= 0) throw ShapeError("LossConfig: epsilon must be > 0");
    if (lambda < 0) throw ShapeError("LossConfig: lambda must be >= 0");
  }
};

template <class S>
struct ComplexTensor {
  Tensor<S> re, im;
};

// ---------------------------------------------------------------------------
// Charbonnier loss: mean over elements of sqrt((r-y)^2 + eps^2)
// ---------------------------------------------------------------------------

namespace detail {

// Balanced pairwise summation: deterministic, low error, and exact for a
// power-of-two count of identical values (so the mean of N equal terms over
// a power-of-two-sized tensor reproduces the term bit-for-bit).
template <class S>
S pairwise_sum(const S* a, index_t n) {
  if (n == 1) return a[0];
  if (n == 2) return a[0] + a[1];
  const index_t half = n / 2;
  return pairwise_sum(a, half) + pairwise_sum(a + half, n - half);
}

}  // namespace detail

template <class S>
S charbonnier(const Tensor<S>& r, const Tensor<S>& y, const LossConfig& cfg,
              Tensor<S>* grad_r = nullptr) {
  if (r.shape() != y.shape())
    throw ShapeError("charbonnier: shapes " + r.shape().str() + " vs " + y.shape().str());
  const S eps2 = static_cast<S>(cfg.epsilon * cfg.epsilon);
  const index_t n = r.size();
  const S inv_n = S(1) / static_cast<S>(n);
  std::vector<S> roots(static_cast<size_t>(n));
  if (grad_r && grad_r->shape() != r.shape()) *grad_r = Tensor<S>(r.shape());
  for (index_t i = 0; i < n; ++i) {
    const S d = r[i] - y[i];
    const S root = std::sqrt(d * d + eps2);
    roots[static_cast<size_t>(i)] = root;
    if (grad_r) (*grad_r)[i] = d / root * inv_n;
  }
  return detail::pairwise_sum(roots.data(), n) / static_cast<S>(n);
}

// ---------------------------------------------------------------------------
// 2-D DFT: radix-2 Cooley-Tukey on power-of-two axes, direct DFT otherwise.
// Un-normalized forward transform, applied per (n, c) plane.
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_pow2(index_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place 1-D transform of `n` complex values with stride `stride`.
template <class S>
void fft1d(std::complex<S>* a, index_t n, index_t stride, bool inverse) {
  if (n == 1) return;
  if (is_pow2(n)) {
    // bit-reversal permutation
    for (index_t i = 1, j = 0; i < n; ++i) {
      index_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(a[i * stride], a[j * stride]);
    }
    for (index_t len = 2; len <= n; len <<= 1) {
      const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
      const std::complex<S> wl(static_cast<S>(std::cos(ang)), static_cast<S>(std::sin(ang)));
      for (index_t i = 0; i < n; i += len) {
        std::complex<S> w(1);
        for (index_t k = 0; k < len / 2; ++k) {
          std::complex<S> u = a[(i + k) * stride];
          std::complex<S> v = a[(i + k + len / 2) * stride] * w;
          a[(i + k) * stride] = u + v;
          a[(i + k + len / 2) * stride] = u - v;
          w *= wl;
        }
      }
    }
  } else {
    // direct O(n^2) fallback
    std::vector<std::complex<S>> tmp(static_cast<size_t>(n));
    for (index_t k = 0; k < n; ++k) {
      std::complex<S> acc(0);
      for (index_t j = 0; j < n; ++j) {
        const double ang =
            (inverse ? 2.0 : -2.0) * M_PI * static_cast<double>(k * j) / static_cast<double>(n);
        acc += a[j * stride] *
               std::complex<S>(static_cast<S>(std::cos(ang)), static_cast<S>(std::sin(ang)));
      }
      tmp[static_cast<size_t>(k)] = acc;
    }
    for (index_t k = 0; k < n; ++k) a[k * stride] = tmp[static_cast<size_t>(k)];
  }
}

template <class S>
void dft2d_planes(const Tensor<S>& re_in, const Tensor<S>* im_in, Tensor<S>& re_out,
                  Tensor<S>& im_out, bool inverse) {
  const Shape4 s = re_in.shape();
  std::vector<std::complex<S>> buf(static_cast<size_t>(s.h * s.w));
  for (index_t n = 0; n < s.n; ++n)
    for (index_t c = 0; c < s.c; ++c) {
      const index_t base = ((n * s.c + c) * s.h) * s.w;
      for (index_t i = 0; i < s.h * s.w; ++i)
        buf[static_cast<size_t>(i)] =
            std::complex<S>(re_in.data()[base + i], im_in ? im_in->data()[base + i] : S(0));
      for (index_t r = 0; r < s.h; ++r) fft1d(buf.data() + r * s.w, s.w, 1, inverse);
      for (index_t col = 0; col < s.w; ++col) fft1d(buf.data() + col, s.h, s.w, inverse);
      for (index_t i = 0; i < s.h * s.w; ++i) {
        re_out.data()[base + i] = buf[static_cast<size_t>(i)].real();
        im_out.data()[base + i] = buf[static_cast<size_t>(i)].imag();
      }
    }
}

}  // namespace detail

template <class S>
ComplexTensor<S> fft2d(const Tensor<S>& x) {
  check_finite(x, "fft2d");
  ComplexTensor<S> out{Tensor<S>(x.shape()), Tensor<S>(x.shape())};
  detail::dft2d_planes(x, static_cast<const Tensor<S>*>(nullptr), out.re, out.im, false);
  return out;
}

// ---------------------------------------------------------------------------
// FFT loss: mean over all bins of |d_re| + |d_im|, un-normalized DFT.
// ---------------------------------------------------------------------------

template <class S>
S fft_loss(const Tensor<S>& r, const Tensor<S>& y, Tensor<S>* grad_r = nullptr) {
  if (r.shape() != y.shape())
    throw ShapeError("fft_loss: shapes " + r.shape().str() + " vs " + y.shape().str());
  ComplexTensor<S> fr = fft2d(r);
  ComplexTensor<S> fy = fft2d(y);
  const index_t n = r.size();
  const S inv_n = S(1) / static_cast<S>(n);
  S acc = S(0);
  Tensor<S> sign_re(r.shape()), sign_im(r.shape());
  for (index_t i = 0; i < n; ++i) {
    const S dre = fr.re[i] - fy.re[i];
    const S dim = fr.im[i] - fy.im[i];
    acc += std::abs(dre) + std::abs(dim);
    sign_re[i] = (dre > S(0)) - (dre < S(0));
    sign_im[i] = (dim > S(0)) - (dim < S(0));
  }
  if (grad_r) {
    // Adjoint of the un-normalized DFT applied to the sign pattern: the real
    // part of the conjugate-kernel transform of (s_re + i s_im).
    Tensor<S> gre(r.shape()), gim(r.shape());
    detail::dft2d_planes(sign_re, &sign_im, gre, gim, true);
    *grad_r = Tensor<S>(r.shape());
    for (index_t i = 0; i < n; ++i) (*grad_r)[i] = gre[i] * inv_n;
  }
  return acc * inv_n;
}

// ---------------------------------------------------------------------------
// total loss: L_char + lambda * L_fft
// ---------------------------------------------------------------------------

template <class S>
struct LossBreakdown {
  S charbonnier = S(0);
  S fft = S(0);
  S total = S(0);
};

template <class S>
LossBreakdown<S> total_loss(const Tensor<S>& r, const Tensor<S>& y, const LossConfig& cfg,
                            Tensor<S>* grad_r = nullptr) {
  cfg.validate();
  LossBreakdown<S> lb;
  lb.charbonnier = charbonnier(r, y, cfg, grad_r);
  // The FFT term is always reported; its gradient path is active only for
  // lambda != 0, so zeroing lambda reproduces the pure-Charbonnier run.
  Tensor<S> gfft;
  lb.fft = fft_loss(r, y, (grad_r && cfg.lambda != 0.0) ? &gfft : nullptr);
  if (grad_r && cfg.lambda != 0.0)
    for (index_t i = 0; i < r.size(); ++i) (*grad_r)[i] += static_cast<S>(cfg.lambda) * gfft[i];
  lb.total = lb.charbonnier + static_cast<S>(cfg.lambda) * lb.fft;
  return lb;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

// PSNR in dB for values in [0,1]; +infinity when the images are identical.
template <class S>
double psnr(const Tensor<S>& r, const Tensor<S>& y) {
  if (r.shape() != y.shape())
    throw ShapeError("psnr: shapes " + r.shape().str() + " vs " + y.shape().str());
  double mse = 0.0;
  for (index_t i = 0; i < r.size(); ++i) {
    const double d = static_cast<double>(r[i]) - static_cast<double>(y[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(r.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace detail {
inline const std::vector<double>& ssim_window() {
  static const std::vector<double> win = [] {
    std::vector<double> w(11);
    const double sigma = 1.5;
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5;
      w[static_cast<size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
      sum += w[static_cast<size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return win;
}
}  // namespace detail

// Mean local SSIM, 11x11 Gaussian window sigma = 1.5, K1 = 0.01, K2 = 0.03,
// dynamic range 1; averaged over valid windows, channels, batch.
template <class S>
double ssim(const Tensor<S>& r, const Tensor<S>& y) {
  if (r.shape() != y.shape())
    throw ShapeError("ssim: shapes " + r.shape().str() + " vs " + y.shape().str());
  const Shape4 s = r.shape();
  constexpr int W = 11;
  if (s.h < W || s.w < W)
    throw ShapeError("ssim: image smaller than the 11x11 window: " + s.str());
  const auto& win = detail::ssim_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  double acc = 0.0;
  index_t count = 0;
  for (index_t n = 0; n < s.n; ++n)
    for (index_t c = 0; c < s.c; ++c) {
      const S* a = r.data() + ((n * s.c + c) * s.h) * s.w;
      const S* b = y.data() + ((n * s.c + c) * s.h) * s.w;
      for (index_t i = 0; i + W <= s.h; ++i)
        for (index_t j = 0; j + W <= s.w; ++j) {
          double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
          for (int u = 0; u < W; ++u)
            for (int v = 0; v < W; ++v) {
              const double wgt = win[static_cast<size_t>(u)] * win[static_cast<size_t>(v)];
              const double va = static_cast<double>(a[(i + u) * s.w + (j + v)]);
              const double vb = static_cast<double>(b[(i + u) * s.w + (j + v)]);
              mu_a += wgt * va;
              mu_b += wgt * vb;
              aa += wgt * va * va;
              bb += wgt * vb * vb;
              ab += wgt * va * vb;
            }
          const double var_a = aa - mu_a * mu_a;
          const double var_b = bb - mu_b * mu_b;
          const double cov = ab - mu_a * mu_b;
          acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
          ++count;
        }
    }
  return acc / static_cast<double>(count);
}

}  // namespace banet
