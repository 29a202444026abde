#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "banet/blocks.hpp"
#include "banet/loss.hpp"
#include "banet/rng.hpp"

namespace banet {

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

template <class S>
struct AdamState {
  std::vector<S> m, v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(size_t n) : m(n, S(0)), v(n, S(0)) {}
};

// Bias-corrected Adam update; increments state.t before use.
template <class S>
void adam_step(std::vector<S>& params, const std::vector<S>& grads, AdamState<S>& st, double lr) {
  if (params.size() != grads.size() || params.size() != st.m.size() ||
      params.size() != st.v.size())
    throw ShapeError("adam_step: parameter/gradient/moment length mismatch");
  st.t += 1;
  const double b1 = st.beta1, b2 = st.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double m = b1 * static_cast<double>(st.m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(st.v[i]) + (1.0 - b2) * g * g;
    st.m[i] = static_cast<S>(m);
    st.v[i] = static_cast<S>(v);
    const double mhat = m / c1;
    const double vhat = v / c2;
    params[i] = static_cast<S>(static_cast<double>(params[i]) -
                               lr * mhat / (std::sqrt(vhat) + st.eps));
  }
}

// ---------------------------------------------------------------------------
// learning-rate schedule
// ---------------------------------------------------------------------------

struct LrSchedule {
  double eta_max = 1e-4;
  double eta_min = 1e-7;
  std::uint64_t total_steps = 1;

  void validate() const {
    if (!(0 < eta_min && eta_min < eta_max))
      throw ShapeError("LrSchedule: requires 0 < eta_min < eta_max");
    if (total_steps < 1) throw ShapeError("LrSchedule: total_steps must be >= 1");
  }
};

inline double cosine_lr(std::uint64_t t, const LrSchedule& s) {
  s.validate();
  if (t > s.total_steps) throw ShapeError("cosine_lr: step beyond schedule end");
  const double frac = static_cast<double>(t) / static_cast<double>(s.total_steps);
  return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(M_PI * frac));
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
  index_t crop = 256;
  bool hflip = true;
  bool vflip = true;
  bool rot90 = true;
  bool enabled = true;
};

template <class S>
Tensor<S> crop_tensor(const Tensor<S>& x, index_t i0, index_t j0, index_t ch, index_t cw) {
  const Shape4 s = x.shape();
  if (i0 < 0 || j0 < 0 || i0 + ch > s.h || j0 + cw > s.w)
    throw ShapeError("crop out of range for " + s.str());
  Tensor<S> out(Shape4{s.n, s.c, ch, cw});
  for (index_t n = 0; n < s.n; ++n)
    for (index_t c = 0; c < s.c; ++c)
      for (index_t i = 0; i < ch; ++i)
        std::copy(x.data() + ((n * s.c + c) * s.h + i0 + i) * s.w + j0,
                  x.data() + ((n * s.c + c) * s.h + i0 + i) * s.w + j0 + cw,
                  out.data() + ((n * s.c + c) * ch + i) * cw);
  return out;
}

template <class S>
Tensor<S> hflip_tensor(const Tensor<S>& x) {
  const Shape4 s = x.shape();
  Tensor<S> out(s);
  for (index_t n = 0; n < s.n; ++n)
    for (index_t c = 0; c < s.c; ++c)
      for (index_t i = 0; i < s.h; ++i) {
        const S* src = x.data() + ((n * s.c + c) * s.h + i) * s.w;
        S* dst = out.data() + ((n * s.c + c) * s.h + i) * s.w;
        for (index_t j = 0; j < s.w; ++j) dst[j] = src[s.w - 1 - j];
      }
  return out;
}

template <class S>
Tensor<S> vflip_tensor(const Tensor<S>& x) {
  const Shape4 s = x.shape();
  Tensor<S> out(s);
  for (index_t n = 0; n < s.n; ++n)
    for (index_t c = 0; c < s.c; ++c)
      for (index_t i = 0; i < s.h; ++i)
        std::copy(x.data() + ((n * s.c + c) * s.h + i) * s.w,
                  x.data() + ((n * s.c + c) * s.h + i + 1) * s.w,
                  out.data() + ((n * s.c + c) * s.h + (s.h - 1 - i)) * s.w);
  return out;
}

// Counter-clockwise quarter turns; requires h == w for k odd.
template <class S>
Tensor<S> rot90_tensor(const Tensor<S>& x, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return x;
  const Shape4 s = x.shape();
  if ((k % 2) == 1 && s.h != s.w) throw ShapeError("rot90: odd quarter turns need square input");
  Tensor<S> out(s);
  for (index_t n = 0; n < s.n; ++n)
    for (index_t c = 0; c < s.c; ++c)
      for (index_t i = 0; i < s.h; ++i)
        for (index_t j = 0; j < s.w; ++j) {
          index_t si, sj;
          switch (k) {
            case 1: si = j; sj = s.w - 1 - i; break;
            case 2: si = s.h - 1 - i; sj = s.w - 1 - j; break;
            default: si = s.h - 1 - j; sj = i; break;
          }
          out.at(n, c, i, j) = x.at(n, c, si, sj);
        }
  return out;
}

// One crop/flip/rotation decision per pair, applied identically to both.
template <class S>
std::pair<Tensor<S>, Tensor<S>> augment_pair(const Tensor<S>& blur, const Tensor<S>& sharp,
                                             const AugmentConfig& cfg, Rng& rng) {
  if (blur.shape() != sharp.shape())
    throw ShapeError("augment_pair: blur/sharp shape mismatch");
  if (!cfg.enabled) return {blur, sharp};
  const Shape4 s = blur.shape();
  if (cfg.crop > s.h || cfg.crop > s.w)
    throw ShapeError("augment_pair: crop " + std::to_string(cfg.crop) + " larger than image " +
                     s.str());
  const index_t i0 = static_cast<index_t>(rng.uniform_int(static_cast<std::uint64_t>(s.h - cfg.crop + 1)));
  const index_t j0 = static_cast<index_t>(rng.uniform_int(static_cast<std::uint64_t>(s.w - cfg.crop + 1)));
  Tensor<S> b = crop_tensor(blur, i0, j0, cfg.crop, cfg.crop);
  Tensor<S> g = crop_tensor(sharp, i0, j0, cfg.crop, cfg.crop);
  if (cfg.hflip && rng.uniform_int(2) == 1) {
    b = hflip_tensor(b);
    g = hflip_tensor(g);
  }
  if (cfg.vflip && rng.uniform_int(2) == 1) {
    b = vflip_tensor(b);
    g = vflip_tensor(g);
  }
  if (cfg.rot90) {
    const int k = static_cast<int>(rng.uniform_int(4));
    b = rot90_tensor(b, k);
    g = rot90_tensor(g, k);
  }
  return {std::move(b), std::move(g)};
}

// ---------------------------------------------------------------------------
// synthetic linear-motion blur data
// ---------------------------------------------------------------------------

struct SynthConfig {
  index_t size = 96;
  std::uint64_t seed = 0;
  double kernel_min = 3.0;
  double kernel_max = 15.0;
  index_t count = 1;
};

struct BlurKernel {
  index_t size = 1;  // odd
  std::vector<double> taps;  // size*size, sums to 1
  double length = 1.0;
  double angle = 0.0;
};

// Normalized linear-motion point-spread function rasterized by sampling the
// segment densely with bilinear splats.
inline BlurKernel motion_psf(double length, double angle) {
  BlurKernel k;
  k.length = length;
  k.angle = angle;
  const index_t half = static_cast<index_t>(std::ceil((length - 1.0) / 2.0));
  k.size = 2 * half + 1;
  k.taps.assign(static_cast<size_t>(k.size * k.size), 0.0);
  const double cx = half, cy = half;
  const double dx = std::cos(angle), dy = std::sin(angle);
  const int samples = std::max(64, static_cast<int>(length * 32));
  for (int s = 0; s < samples; ++s) {
    const double t = (samples == 1) ? 0.0
                                    : (static_cast<double>(s) / (samples - 1) - 0.5) * (length - 1.0);
    const double px = cx + t * dx, py = cy + t * dy;
    const index_t x0 = static_cast<index_t>(std::floor(px));
    const index_t y0 = static_cast<index_t>(std::floor(py));
    const double fx = px - x0, fy = py - y0;
    auto splat = [&](index_t yy, index_t xx, double wgt) {
      if (yy >= 0 && yy < k.size && xx >= 0 && xx < k.size)
        k.taps[static_cast<size_t>(yy * k.size + xx)] += wgt;
    };
    splat(y0, x0, (1 - fx) * (1 - fy));
    splat(y0, x0 + 1, fx * (1 - fy));
    splat(y0 + 1, x0, (1 - fx) * fy);
    splat(y0 + 1, x0 + 1, fx * fy);
  }
  double sum = 0;
  for (double v : k.taps) sum += v;
  for (double& v : k.taps) v /= sum;
  return k;
}

// Procedural sharp pattern: flat background plus random rectangles and strokes.
template <class S>
Tensor<S> synth_sharp(index_t size, Rng& rng) {
  Tensor<S> img(Shape4{1, 3, size, size});
  S bg[3];
  for (int c = 0; c < 3; ++c) bg[c] = static_cast<S>(rng.uniform(0.1, 0.9));
  for (index_t c = 0; c < 3; ++c)
    std::fill(img.data() + c * size * size, img.data() + (c + 1) * size * size, bg[c]);

  const int n_rect = 6 + static_cast<int>(rng.uniform_int(7));
  for (int r = 0; r < n_rect; ++r) {
    const index_t rh = 4 + static_cast<index_t>(rng.uniform_int(static_cast<std::uint64_t>(size / 2)));
    const index_t rw = 4 + static_cast<index_t>(rng.uniform_int(static_cast<std::uint64_t>(size / 2)));
    const index_t i0 = static_cast<index_t>(rng.uniform_int(static_cast<std::uint64_t>(std::max<index_t>(1, size - rh))));
    const index_t j0 = static_cast<index_t>(rng.uniform_int(static_cast<std::uint64_t>(std::max<index_t>(1, size - rw))));
    S col[3];
    for (int c = 0; c < 3; ++c) col[c] = static_cast<S>(rng.uniform(0.0, 1.0));
    for (index_t c = 0; c < 3; ++c)
      for (index_t i = i0; i < std::min(size, i0 + rh); ++i)
        for (index_t j = j0; j < std::min(size, j0 + rw); ++j)
          img.at(0, c, i, j) = col[c];
  }
  const int n_stroke = 4 + static_cast<int>(rng.uniform_int(5));
  for (int t = 0; t < n_stroke; ++t) {
    double x = rng.uniform(0.0, static_cast<double>(size));
    double y = rng.uniform(0.0, static_cast<double>(size));
    const double ang = rng.uniform(0.0, 2 * M_PI);
    const double len = rng.uniform(static_cast<double>(size) / 4, static_cast<double>(size));
    const index_t thick = 1 + static_cast<index_t>(rng.uniform_int(2));
    S col[3];
    for (int c = 0; c < 3; ++c) col[c] = static_cast<S>(rng.uniform(0.0, 1.0));
    const int steps = static_cast<int>(len * 2);
    for (int st = 0; st < steps; ++st) {
      const index_t ix = static_cast<index_t>(x), iy = static_cast<index_t>(y);
      for (index_t di = 0; di < thick; ++di)
        for (index_t dj = 0; dj < thick; ++dj)
          if (iy + di < size && ix + dj < size && iy + di >= 0 && ix + dj >= 0)
            for (index_t c = 0; c < 3; ++c) img.at(0, c, iy + di, ix + dj) = col[c];
      x += 0.5 * std::cos(ang);
      y += 0.5 * std::sin(ang);
      if (x < 0 || y < 0 || x >= size || y >= size) break;
    }
  }
  return img;
}

// Same-size convolution of each channel with the PSF, clamped to [0,1].
// The border is mirrored rather than zero-filled: a zero border would darken
// a rim of width size/2 around every image, a camera never produces that,
// and the darkening is position-dependent so a translation-invariant network
// cannot model it.
template <class S>
Tensor<S> apply_psf(const Tensor<S>& sharp, const BlurKernel& k) {
  const Shape4 s = sharp.shape();
  if (s.h < k.size || s.w < k.size)
    throw ShapeError("apply_psf: image smaller than blur kernel");
  Tensor<S> out(s);
  const index_t half = (k.size - 1) / 2;
  const auto mirror = [](index_t x, index_t n) {
    if (x < 0) return -x - 1;
    if (x >= n) return 2 * n - 1 - x;
    return x;
  };
  for (index_t n = 0; n < s.n; ++n)
    for (index_t c = 0; c < s.c; ++c)
      for (index_t i = 0; i < s.h; ++i)
        for (index_t j = 0; j < s.w; ++j) {
          double acc = 0;
          for (index_t u = 0; u < k.size; ++u) {
            const index_t ii = mirror(i + u - half, s.h);
            for (index_t v = 0; v < k.size; ++v) {
              const index_t jj = mirror(j + v - half, s.w);
              acc += k.taps[static_cast<size_t>(u * k.size + v)] *
                     static_cast<double>(sharp.at(n, c, ii, jj));
            }
          }
          out.at(n, c, i, j) = static_cast<S>(std::clamp(acc, 0.0, 1.0));
        }
  return out;
}

template <class S>
struct SynthPair {
  Tensor<S> blur, sharp;
  BlurKernel kernel;
};

template <class S>
SynthPair<S> synth_blur_pair(const SynthConfig& cfg, Rng& rng) {
  Tensor<S> sharp = synth_sharp<S>(cfg.size, rng);
  const double len = rng.uniform(cfg.kernel_min, cfg.kernel_max);
  const double ang = rng.uniform(0.0, M_PI);
  BlurKernel k = motion_psf(len, ang);
  Tensor<S> blur = apply_psf(sharp, k);
  return {std::move(blur), std::move(sharp), std::move(k)};
}

// ---------------------------------------------------------------------------
// paired dataset layout (root/{blur,sharp}/name.png, names matched exactly)
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::string root;
  std::string blur_dir = "blur";
  std::string sharp_dir = "sharp";
};

inline std::vector<std::pair<std::string, std::string>> list_pairs(const DatasetSpec& ds) {
  namespace fs = std::filesystem;
  const fs::path broot = fs::path(ds.root) / ds.blur_dir;
  const fs::path sroot = fs::path(ds.root) / ds.sharp_dir;
  if (!fs::is_directory(broot) || !fs::is_directory(sroot))
    throw std::runtime_error("dataset: missing '" + broot.string() + "' or '" + sroot.string() +
                             "'");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(broot))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  for (const std::string& name : names) {
    const fs::path sp = sroot / name;
    if (!fs::is_regular_file(sp))
      throw std::runtime_error("dataset: blur image '" + name + "' has no sharp counterpart");
    pairs.emplace_back((broot / name).string(), sp.string());
  }
  if (pairs.empty()) throw std::runtime_error("dataset: no image pairs under " + ds.root);
  return pairs;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

template <class S>
struct Checkpoint {
  NetworkConfig cfg;
  BanetParams<S> params;
  bool has_train_state = false;
  AdamState<S> adam;
  LrSchedule schedule;
  std::uint64_t step = 0;
  Rng data_rng;
};

namespace detail {

constexpr char kCkptMagic[8] = {'B', 'A', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

template <class T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}
inline void put_str(std::string& buf, const std::string& s) {
  put(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  template <class T>
  T get() {
    if (pos + sizeof(T) > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_str() {
    const std::uint32_t n = get<std::uint32_t>();
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated string");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::string config_diff(const NetworkConfig& a, const NetworkConfig& b) {
  std::string d;
  auto field = [&](const std::string& name, const std::string& va, const std::string& vb) {
    if (va != vb) d += "  " + name + ": " + va + " vs " + vb + "\n";
  };
  field("base_channels", std::to_string(a.base_channels), std::to_string(b.base_channels));
  field("num_bams", std::to_string(a.num_bams), std::to_string(b.num_bams));
  auto ks = [](const KernelSet& k) {
    std::string s;
    for (index_t n : k.ns) s += std::to_string(n) + ",";
    return s;
  };
  field("kernel_set", ks(a.kernel_set), ks(b.kernel_set));
  field("variant", to_string(a.variant), to_string(b.variant));
  field("conv_block", to_string(a.block_kind()), to_string(b.block_kind()));
  field("seed", std::to_string(a.seed), std::to_string(b.seed));
  return d;
}

template <class S>
void save_checkpoint(const std::string& path, const Checkpoint<S>& ck) {
  std::string head;
  head.append(detail::kCkptMagic, 8);
  detail::put(head, detail::kCkptVersion);
  detail::put(head, static_cast<std::int64_t>(ck.cfg.base_channels));
  detail::put(head, static_cast<std::int64_t>(ck.cfg.num_bams));
  detail::put(head, static_cast<std::uint32_t>(ck.cfg.kernel_set.ns.size()));
  for (index_t n : ck.cfg.kernel_set.ns) detail::put(head, static_cast<std::int64_t>(n));
  detail::put_str(head, to_string(ck.cfg.variant));
  detail::put_str(head, to_string(ck.cfg.block_kind()));
  detail::put(head, ck.cfg.seed);
  detail::put(head, static_cast<std::uint8_t>(ck.has_train_state ? 1 : 0));
  if (ck.has_train_state) {
    detail::put(head, ck.step);
    detail::put(head, ck.adam.t);
    detail::put(head, ck.adam.beta1);
    detail::put(head, ck.adam.beta2);
    detail::put(head, ck.adam.eps);
    detail::put(head, ck.schedule.eta_max);
    detail::put(head, ck.schedule.eta_min);
    detail::put(head, ck.schedule.total_steps);
    detail::put(head, ck.data_rng.state);
  }

  // manifest: named tensors in canonical visitation order, then moments
  struct Entry {
    std::string name;
    Shape4 dims;
    const S* data;
    index_t elems;
  };
  std::vector<Entry> entries;
  int idx = 0;
  const_cast<BanetParams<S>&>(ck.params).visit([&](ConvParams<S>& cp) {
    char nm[32];
    std::snprintf(nm, sizeof nm, "conv%04d", idx++);
    entries.push_back({std::string(nm) + ".weight", cp.weight.shape(), cp.weight.data(),
                       cp.weight.size()});
    if (!cp.bias.empty())
      entries.push_back({std::string(nm) + ".bias",
                         Shape4{1, 1, 1, static_cast<index_t>(cp.bias.size())}, cp.bias.data(),
                         static_cast<index_t>(cp.bias.size())});
  });
  if (ck.has_train_state) {
    entries.push_back({"adam.m", Shape4{1, 1, 1, static_cast<index_t>(ck.adam.m.size())},
                       ck.adam.m.data(), static_cast<index_t>(ck.adam.m.size())});
    entries.push_back({"adam.v", Shape4{1, 1, 1, static_cast<index_t>(ck.adam.v.size())},
                       ck.adam.v.data(), static_cast<index_t>(ck.adam.v.size())});
  }

  detail::put(head, static_cast<std::uint64_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const Entry& e : entries) {
    detail::put_str(head, e.name);
    detail::put(head, static_cast<std::int64_t>(e.dims.n));
    detail::put(head, static_cast<std::int64_t>(e.dims.c));
    detail::put(head, static_cast<std::int64_t>(e.dims.h));
    detail::put(head, static_cast<std::int64_t>(e.dims.w));
    detail::put(head, static_cast<std::uint32_t>(sizeof(S)));
    detail::put(head, offset);
    offset += static_cast<std::uint64_t>(e.elems) * sizeof(S);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open '" + tmp + "' for writing");
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const Entry& e : entries)
      f.write(reinterpret_cast<const char*>(e.data),
              static_cast<std::streamsize>(e.elems * static_cast<index_t>(sizeof(S))));
    if (!f) throw std::runtime_error("checkpoint: write failure on '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

template <class S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::Reader rd{buf};
  char magic[8];
  for (char& c : magic) c = rd.get<char>();
  if (std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t ver = rd.get<std::uint32_t>();
  if (ver != detail::kCkptVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ver));

  NetworkConfig cfg;
  cfg.base_channels = rd.get<std::int64_t>();
  cfg.num_bams = rd.get<std::int64_t>();
  const std::uint32_t nks = rd.get<std::uint32_t>();
  cfg.kernel_set.ns.clear();
  for (std::uint32_t i = 0; i < nks; ++i) cfg.kernel_set.ns.push_back(rd.get<std::int64_t>());
  cfg.variant = variant_from_string(rd.get_str());
  cfg.conv_block = conv_block_from_string(rd.get_str());
  cfg.seed = rd.get<std::uint64_t>();

  Checkpoint<S> ck;
  ck.cfg = cfg;
  ck.params = BanetParams<S>(cfg);
  ck.has_train_state = rd.get<std::uint8_t>() != 0;
  if (ck.has_train_state) {
    ck.step = rd.get<std::uint64_t>();
    ck.adam.t = rd.get<std::uint64_t>();
    ck.adam.beta1 = rd.get<double>();
    ck.adam.beta2 = rd.get<double>();
    ck.adam.eps = rd.get<double>();
    ck.schedule.eta_max = rd.get<double>();
    ck.schedule.eta_min = rd.get<double>();
    ck.schedule.total_steps = rd.get<std::uint64_t>();
    ck.data_rng.state = rd.get<std::uint64_t>();
  }

  const std::uint64_t nentries = rd.get<std::uint64_t>();
  struct Entry {
    std::string name;
    Shape4 dims;
    std::uint64_t offset;
    std::uint32_t width;
  };
  std::vector<Entry> entries;
  std::uint64_t expected_offset = 0;
  for (std::uint64_t i = 0; i < nentries; ++i) {
    Entry e;
    e.name = rd.get_str();
    e.dims.n = rd.get<std::int64_t>();
    e.dims.c = rd.get<std::int64_t>();
    e.dims.h = rd.get<std::int64_t>();
    e.dims.w = rd.get<std::int64_t>();
    e.width = rd.get<std::uint32_t>();
    e.offset = rd.get<std::uint64_t>();
    if (e.width != sizeof(S))
      throw std::runtime_error("checkpoint: scalar width " + std::to_string(e.width) +
                               " does not match build (" + std::to_string(sizeof(S)) + ")");
    if (e.offset != expected_offset)
      throw std::runtime_error("checkpoint: corrupted manifest offset for '" + e.name + "'");
    expected_offset += static_cast<std::uint64_t>(e.dims.elems()) * sizeof(S);
    entries.push_back(std::move(e));
  }
  const size_t blob_start = rd.pos;
  if (blob_start + expected_offset != buf.size())
    throw std::runtime_error("checkpoint: blob size mismatch (truncated or corrupt)");

  size_t ei = 0;
  auto read_into = [&](S* dst, index_t elems, const Shape4& dims) {
    if (ei >= entries.size()) throw std::runtime_error("checkpoint: manifest too short");
    const Entry& e = entries[ei++];
    if (e.dims.elems() != elems)
      throw std::runtime_error("checkpoint: tensor '" + e.name + "' has " +
                               std::to_string(e.dims.elems()) + " elements, expected " +
                               std::to_string(elems));
    (void)dims;
    std::memcpy(dst, buf.data() + blob_start + e.offset,
                static_cast<size_t>(elems) * sizeof(S));
  };
  ck.params.visit([&](ConvParams<S>& cp) {
    read_into(cp.weight.data(), cp.weight.size(), cp.weight.shape());
    if (!cp.bias.empty())
      read_into(cp.bias.data(), static_cast<index_t>(cp.bias.size()), Shape4{});
  });
  if (ck.has_train_state) {
    const index_t np = num_scalars<S>(ck.params);
    ck.adam.m.resize(static_cast<size_t>(np));
    ck.adam.v.resize(static_cast<size_t>(np));
    read_into(ck.adam.m.data(), np, Shape4{});
    read_into(ck.adam.v.data(), np, Shape4{});
  }
  if (ei != entries.size()) throw std::runtime_error("checkpoint: unexpected extra tensors");
  return ck;
}

// Loads and verifies the stored config against `expected`, reporting a
// field-level diff on mismatch.
template <class S>
Checkpoint<S> load_checkpoint_expect(const std::string& path, const NetworkConfig& expected) {
  Checkpoint<S> ck = load_checkpoint<S>(path);
  const std::string d = config_diff(ck.cfg, expected);
  if (!d.empty())
    throw std::runtime_error("checkpoint config mismatch (stored vs expected):\n" + d);
  return ck;
}

// ---------------------------------------------------------------------------
// training / evaluation loops
// ---------------------------------------------------------------------------

template <class S>
struct ImagePair {
  Tensor<S> blur, sharp;
};

struct LogRow {
  std::uint64_t step;
  double lr, l_char, l_fft, l_total, wall_ms;
};

template <class S>
struct TrainHyper {
  index_t batch = 4;
  std::uint64_t steps = 1000;
  AugmentConfig augment;
  LossConfig loss;
  LrSchedule schedule;
  std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::string checkpoint_path;         // empty: do not write checkpoints
  std::function<void(const LogRow&)> log;
};

template <class S>
struct TrainState {
  BanetParams<S> params;
  AdamState<S> adam;
  std::uint64_t step = 0;
  Rng data_rng;
};

// Runs hyper.steps optimizer steps (continuing from state.step for resumes).
template <class S>
void train_loop(TrainState<S>& st, const std::vector<ImagePair<S>>& data,
                const TrainHyper<S>& hyper) {
  if (data.empty()) throw std::runtime_error("train_loop: empty dataset");
  hyper.loss.validate();
  hyper.schedule.validate();
  const index_t crop = hyper.augment.enabled ? hyper.augment.crop : data[0].blur.shape().h;
  const index_t cw = hyper.augment.enabled ? hyper.augment.crop : data[0].blur.shape().w;

  std::vector<S> flat = flatten<S>(st.params);
  if (st.adam.m.empty()) st.adam = AdamState<S>(flat.size());

  auto save = [&](const std::string& path) {
    Checkpoint<S> ck;
    ck.cfg = st.params.cfg;
    ck.params = st.params;
    ck.has_train_state = true;
    ck.adam = st.adam;
    ck.schedule = hyper.schedule;
    ck.step = st.step;
    ck.data_rng = st.data_rng;
    save_checkpoint(path, ck);
  };

  for (std::uint64_t it = 0; it < hyper.steps; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cosine_lr(std::min(st.step, hyper.schedule.total_steps), hyper.schedule);

    Tensor<S> bx(Shape4{hyper.batch, 3, crop, cw});
    Tensor<S> by(Shape4{hyper.batch, 3, crop, cw});
    for (index_t b = 0; b < hyper.batch; ++b) {
      const size_t pick = static_cast<size_t>(st.data_rng.uniform_int(data.size()));
      auto [ab, as] = augment_pair(data[pick].blur, data[pick].sharp, hyper.augment, st.data_rng);
      std::copy(ab.data(), ab.data() + ab.size(), bx.data() + b * ab.size());
      std::copy(as.data(), as.data() + as.size(), by.data() + b * as.size());
    }

    BanetCtx<S> ctx;
    Tensor<S> restored = banet_forward(bx, st.params, &ctx);
    Tensor<S> grad_r;
    LossBreakdown<S> lb = total_loss(restored, by, hyper.loss, &grad_r);
    if (!std::isfinite(static_cast<double>(lb.total))) {
      const char* which = !restored.all_finite()  ? "network output"
                          : !bx.all_finite()      ? "input batch"
                                                  : "loss gradient";
      throw NumericError("train_loop: non-finite loss at step " + std::to_string(st.step) +
                         " (first non-finite tensor: " + which + ")");
    }

    BanetGrads<S> grads(st.params);
    banet_backward(ctx, st.params, grad_r, grads);
    std::vector<S> gflat = flatten<S>(grads);
    adam_step(flat, gflat, st.adam, lr);
    unflatten(st.params, flat);
    st.step += 1;

    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (hyper.log)
      hyper.log(LogRow{st.step, lr, static_cast<double>(lb.charbonnier),
                       static_cast<double>(lb.fft), static_cast<double>(lb.total), ms});
    if (!hyper.checkpoint_path.empty() && hyper.checkpoint_every > 0 &&
        st.step % hyper.checkpoint_every == 0)
      save(hyper.checkpoint_path);
  }
  if (!hyper.checkpoint_path.empty()) save(hyper.checkpoint_path);
}

template <class S>
Tensor<S> clamp01(Tensor<S> t) {
  for (index_t i = 0; i < t.size(); ++i) t[i] = std::clamp(t[i], S(0), S(1));
  return t;
}

struct EvalRow {
  std::string name;
  double psnr_db;
  double ssim;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  double mean_psnr = 0;
  double mean_ssim = 0;
};

// Reflect-pads odd spatial dims to even, restores, crops back, clamps, scores.
template <class S>
Tensor<S> restore_image(const Tensor<S>& img, const BanetParams<S>& p) {
  const Shape4 s = img.shape();
  const index_t ph = s.h % 2, pw = s.w % 2;
  if (ph == 0 && pw == 0) return clamp01(banet_forward(img, p));
  Tensor<S> padded(Shape4{s.n, s.c, s.h + ph, s.w + pw});
  for (index_t n = 0; n < s.n; ++n)
    for (index_t c = 0; c < s.c; ++c)
      for (index_t i = 0; i < s.h + ph; ++i)
        for (index_t j = 0; j < s.w + pw; ++j)
          padded.at(n, c, i, j) = img.at(n, c, std::min(i, s.h - 1), std::min(j, s.w - 1));
  Tensor<S> out = clamp01(banet_forward(padded, p));
  return crop_tensor(out, 0, 0, s.h, s.w);
}

template <class S>
EvalResult evaluate(const BanetParams<S>& p, const std::vector<ImagePair<S>>& pairs,
                    const std::vector<std::string>* names = nullptr) {
  if (pairs.empty()) throw std::runtime_error("evaluate: empty dataset");
  EvalResult res;
  for (size_t i = 0; i < pairs.size(); ++i) {
    Tensor<S> restored = restore_image(pairs[i].blur, p);
    EvalRow row;
    row.name = names ? (*names)[i] : ("pair" + std::to_string(i));
    row.psnr_db = psnr(restored, pairs[i].sharp);
    row.ssim = ssim(restored, pairs[i].sharp);
    res.mean_psnr += row.psnr_db;
    res.mean_ssim += row.ssim;
    res.rows.push_back(std::move(row));
  }
  res.mean_psnr /= static_cast<double>(pairs.size());
  res.mean_ssim /= static_cast<double>(pairs.size());
  return res;
}

}  // namespace banet
