// Copyright 2026 the lstmamp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "error.hpp"

namespace lstmamp {

template <typename T>
using Vec = std::vector<T>;

// Dense row-major matrix. Just enough linear algebra for the gate math; this
// is deliberately not a general tensor library.
template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data; // row-major, rows*cols entries

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T(0)) {}

  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<const T> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      m(i, i) = T(1);
    return m;
  }
};

// y = A x
template <typename T>
void matvec_into(const Mat<T>& a, std::span<const T> x, std::span<T> y) {
  if (x.size() != a.cols || y.size() != a.rows)
    throw dim_error("matvec: A is " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                    ", x has " + std::to_string(x.size()) + " entries");
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* row = a.data.data() + i * a.cols;
    T acc = T(0);
    for (std::size_t j = 0; j < a.cols; ++j)
      acc += row[j] * x[j];
    y[i] = acc;
  }
}

template <typename T>
Vec<T> matvec(const Mat<T>& a, const Vec<T>& x) {
  Vec<T> y(a.rows);
  matvec_into(a, std::span<const T>(x), std::span<T>(y));
  return y;
}

// y += A^T x  (row-major A walked by rows so the inner loop stays contiguous)
template <typename T>
void matvec_t_accum(const Mat<T>& a, std::span<const T> x, std::span<T> y) {
  if (x.size() != a.rows || y.size() != a.cols)
    throw dim_error("matvec_t_accum: shape mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* row = a.data.data() + i * a.cols;
    const T xi = x[i];
    for (std::size_t j = 0; j < a.cols; ++j)
      y[j] += row[j] * xi;
  }
}

// A += u v^T
template <typename T>
void add_outer(Mat<T>& a, std::span<const T> u, std::span<const T> v) {
  if (u.size() != a.rows || v.size() != a.cols)
    throw dim_error("add_outer: shape mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* row = a.data.data() + i * a.cols;
    const T ui = u[i];
    for (std::size_t j = 0; j < a.cols; ++j)
      row[j] += ui * v[j];
  }
}

template <typename T>
T dot(std::span<const T> x, std::span<const T> y) {
  if (x.size() != y.size())
    throw dim_error("dot: length mismatch");
  T acc = T(0);
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += x[i] * y[i];
  return acc;
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
inline T tanh_act(T x) {
  return std::tanh(x);
}

template <typename T>
bool all_finite(std::span<const T> v) {
  for (T x : v)
    if (!std::isfinite(x))
      return false;
  return true;
}

template <typename T>
bool all_finite(const Mat<T>& m) {
  return all_finite(std::span<const T>(m.data));
}

} // namespace lstmamp
