#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace banet {

using index_t = std::int64_t;

// Thrown on any shape/axis mismatch at an op boundary.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a checked build sees a non-finite value.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Shape4 {
  index_t n = 1, c = 1, h = 1, w = 1;

  index_t elems() const { return n * c * h * w; }
  bool operator==(const Shape4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape4& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
  }
};

// Element-count instrumentation for the O(CHW) working-set checks.
// Tracks live tensor elements and the high-water mark since reset().
struct AllocStats {
  static std::atomic<index_t>& current() {
    static std::atomic<index_t> v{0};
    return v;
  }
  static std::atomic<index_t>& peak() {
    static std::atomic<index_t> v{0};
    return v;
  }
  static void reset() {
    current().store(0);
    peak().store(0);
  }
  // Rebase the high-water mark to what is currently live.
  static void reset_peak() { peak().store(current().load()); }
  static void on_alloc(index_t elems) {
    index_t cur = current().fetch_add(elems) + elems;
    index_t p = peak().load();
    while (cur > p && !peak().compare_exchange_weak(p, cur)) {
    }
  }
  static void on_free(index_t elems) { current().fetch_sub(elems); }
};

// Dense 4-D array in (n, c, h, w) row-major order.
template <class S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape4 shape, S fill = S(0))
      : shape_(shape), data_(static_cast<size_t>(check_shape(shape)), fill) {
    AllocStats::on_alloc(shape_.elems());
  }

  Tensor(Shape4 shape, std::vector<S> data) : shape_(shape), data_(std::move(data)) {
    if (static_cast<index_t>(data_.size()) != shape_.elems())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    AllocStats::on_alloc(shape_.elems());
  }

  Tensor(const Tensor& o) : shape_(o.shape_), data_(o.data_) {
    AllocStats::on_alloc(shape_.elems());
  }
  Tensor(Tensor&& o) noexcept : shape_(o.shape_), data_(std::move(o.data_)) {
    o.shape_ = Shape4{0, 0, 0, 0};
  }
  Tensor& operator=(const Tensor& o) {
    if (this != &o) {
      AllocStats::on_free(live_elems());
      shape_ = o.shape_;
      data_ = o.data_;
      AllocStats::on_alloc(live_elems());
    }
    return *this;
  }
  Tensor& operator=(Tensor&& o) noexcept {
    if (this != &o) {
      AllocStats::on_free(live_elems());
      shape_ = o.shape_;
      data_ = std::move(o.data_);
      o.shape_ = Shape4{0, 0, 0, 0};
    }
    return *this;
  }
  ~Tensor() { AllocStats::on_free(live_elems()); }

  const Shape4& shape() const { return shape_; }
  index_t size() const { return static_cast<index_t>(data_.size()); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }

  S& at(index_t n, index_t c, index_t h, index_t w) {
    return data_[static_cast<size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }
  S at(index_t n, index_t c, index_t h, index_t w) const {
    return data_[static_cast<size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }
  S& operator[](index_t i) { return data_[static_cast<size_t>(i)]; }
  S operator[](index_t i) const { return data_[static_cast<size_t>(i)]; }

  bool all_finite() const {
    for (const S& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  static index_t check_shape(const Shape4& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
      throw ShapeError("all Shape4 extents must be >= 1, got " + s.str());
    return s.elems();
  }
  index_t live_elems() const {
    return (shape_.n <= 0) ? 0 : shape_.elems();
  }

  Shape4 shape_{0, 0, 0, 0};
  std::vector<S> data_;
};

// Finiteness validation at op boundaries; active in checked builds only.
#ifdef BANET_CHECKED
template <class S>
inline void check_finite(const Tensor<S>& t, const char* where) {
  if (!t.all_finite())
    throw NumericError(std::string("non-finite value entering ") + where);
}
#else
template <class S>
inline void check_finite(const Tensor<S>&, const char*) {}
#endif

}  // namespace banet
