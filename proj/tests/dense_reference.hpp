#pragma once

// Naive reference kernels used as test oracles. These are written from the
// mathematical definitions with plain index loops — independently of the
// library kernels — so that agreement between the two is evidence, not
// tautology. Keep them slow and obvious.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "normprop/tensor.hpp"

namespace testref {

// Classic i-j-k triple loop (library uses i-k-j with row pointers).
inline normprop::DenseMatrix ref_matmul(const normprop::DenseMatrix& a,
                                        const normprop::DenseMatrix& b) {
  normprop::DenseMatrix out(a.rows, b.cols, 0.0);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::int64_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

inline normprop::DenseMatrix ref_transpose(const normprop::DenseMatrix& a) {
  normprop::DenseMatrix out(a.cols, a.rows, 0.0);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

inline normprop::DenseMatrix ref_densify(const normprop::SparseMatrix& s) {
  normprop::DenseMatrix out(s.rows, s.cols, 0.0);
  for (std::int64_t i = 0; i < s.rows; ++i)
    for (std::int64_t e = s.row_offsets[static_cast<std::size_t>(i)];
         e < s.row_offsets[static_cast<std::size_t>(i) + 1]; ++e)
      out(i, s.col_indices[static_cast<std::size_t>(e)]) += s.values[static_cast<std::size_t>(e)];
  return out;
}

inline double ref_row_norm(const normprop::DenseMatrix& x, std::int64_t i) {
  double sq = 0.0;
  for (std::int64_t j = 0; j < x.cols; ++j) sq += x(i, j) * x(i, j);
  return std::sqrt(sq);
}

inline double ref_dot(const normprop::DenseMatrix& a, std::int64_t i,
                      const normprop::DenseMatrix& b, std::int64_t j) {
  double acc = 0.0;
  for (std::int64_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(j, k);
  return acc;
}

// Central finite difference of a scalar function of a flat vector.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
  std::vector<double> g(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const normprop::DenseMatrix& a, const normprop::DenseMatrix& b) {
  return max_abs_diff(a.data, b.data);
}

}  // namespace testref
