#pragma once

#include <vector>

#include "banet/rng.hpp"
#include "banet/tensor.hpp"
#include "oracles.hpp"

namespace testutil {

using banet::index_t;
using banet::Rng;
using banet::Shape4;
using banet::Tensor;

template <class S>
Tensor<S> random_tensor(const Shape4& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<S> t(s);
  for (index_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <class S>
void randomize(banet::ConvParams<S>& p, Rng& rng, double scale = 0.5) {
  for (index_t i = 0; i < p.weight.size(); ++i)
    p.weight[i] = static_cast<S>(rng.uniform(-scale, scale));
  for (S& b : p.bias) b = static_cast<S>(rng.uniform(-scale, scale));
}

template <class S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  double m = 0;
  for (index_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <class S>
double dot(const Tensor<S>& a, const Tensor<S>& b) {
  double s = 0;
  for (index_t i = 0; i < a.size(); ++i)
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

}  // namespace testutil
