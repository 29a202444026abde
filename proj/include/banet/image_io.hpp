#pragma once

#include <opencv2/imgcodecs.hpp>

#include <stdexcept>
#include <string>

#include "banet/tensor.hpp"

namespace banet {

// PNG <-> (1,3,h,w) float tensor in [0,1]. 8-bit quantization happens only at
// these boundaries; everything in between stays floating point.
template <class S>
Tensor<S> load_image(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);  // BGR, 8-bit
  if (img.empty()) throw std::runtime_error("cannot read image '" + path + "'");
  const index_t h = img.rows, w = img.cols;
  Tensor<S> t(Shape4{1, 3, h, w});
  for (index_t i = 0; i < h; ++i) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(static_cast<int>(i));
    for (index_t j = 0; j < w; ++j) {
      t.at(0, 0, i, j) = static_cast<S>(row[j][2]) / S(255);  // R
      t.at(0, 1, i, j) = static_cast<S>(row[j][1]) / S(255);  // G
      t.at(0, 2, i, j) = static_cast<S>(row[j][0]) / S(255);  // B
    }
  }
  return t;
}

template <class S>
void save_image(const std::string& path, const Tensor<S>& t) {
  const Shape4 s = t.shape();
  if (s.n != 1 || s.c != 3)
    throw ShapeError("save_image expects a (1,3,h,w) tensor, got " + s.str());
  cv::Mat img(static_cast<int>(s.h), static_cast<int>(s.w), CV_8UC3);
  auto q = [](S v) {
    double x = static_cast<double>(v);
    x = x < 0 ? 0 : (x > 1 ? 1 : x);
    return static_cast<unsigned char>(x * 255.0 + 0.5);
  };
  for (index_t i = 0; i < s.h; ++i) {
    cv::Vec3b* row = img.ptr<cv::Vec3b>(static_cast<int>(i));
    for (index_t j = 0; j < s.w; ++j) {
      row[j][2] = q(t.at(0, 0, i, j));
      row[j][1] = q(t.at(0, 1, i, j));
      row[j][0] = q(t.at(0, 2, i, j));
    }
  }
  if (!cv::imwrite(path, img))
    throw std::runtime_error("cannot write image '" + path + "'");
}

// Single-channel variant for attention-mask dumps: min-max normalized.
template <class S>
void save_gray_image(const std::string& path, const Tensor<S>& t, index_t n, index_t c) {
  const Shape4 s = t.shape();
  S lo = t.at(n, c, 0, 0), hi = lo;
  for (index_t i = 0; i < s.h; ++i)
    for (index_t j = 0; j < s.w; ++j) {
      lo = std::min(lo, t.at(n, c, i, j));
      hi = std::max(hi, t.at(n, c, i, j));
    }
  const S range = (hi > lo) ? (hi - lo) : S(1);
  cv::Mat img(static_cast<int>(s.h), static_cast<int>(s.w), CV_8UC1);
  for (index_t i = 0; i < s.h; ++i) {
    unsigned char* row = img.ptr<unsigned char>(static_cast<int>(i));
    for (index_t j = 0; j < s.w; ++j)
      row[j] = static_cast<unsigned char>(
          static_cast<double>((t.at(n, c, i, j) - lo) / range) * 255.0 + 0.5);
  }
  if (!cv::imwrite(path, img))
    throw std::runtime_error("cannot write image '" + path + "'");
}

}  // namespace banet
