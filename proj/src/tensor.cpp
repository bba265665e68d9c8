#include "normprop/tensor.hpp"

#include <cmath>
#include <string>

namespace normprop {

DenseMatrix DenseMatrix::identity(std::int64_t n) {
  DenseMatrix out(n, n, 0.0);
  for (std::int64_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

std::uint64_t Rng::next_u64() {
  // splitmix64 (Steele, Lea, Flood 2014): increment a Weyl counter, mix it.
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::normal() {
  // Box-Muller: two uniforms in, one normal out (the sibling is discarded so
  // the draw count per sample stays fixed at two).
  double u1 = uniform_open();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::int64_t Rng::bounded(std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("Rng::bounded: n must be positive");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t threshold = (0ULL - un) % un;  // (2^64 - n) mod n
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return static_cast<std::int64_t>(r % un);
  }
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: inner dimensions disagree (" + std::to_string(a.cols) +
                                " vs " + std::to_string(b.rows) + ")");
  DenseMatrix out(a.rows, b.cols, 0.0);
  for (std::int64_t i = 0; i < a.rows; ++i) {
    for (std::int64_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      double* orow = out.data.data() + i * out.cols;
      for (std::int64_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

DenseMatrix matmul_ta(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows != b.rows)
    throw std::invalid_argument("matmul_ta: leading dimensions disagree (" +
                                std::to_string(a.rows) + " vs " + std::to_string(b.rows) + ")");
  DenseMatrix out(a.cols, b.cols, 0.0);
  for (std::int64_t k = 0; k < a.rows; ++k) {
    const double* arow = a.data.data() + k * a.cols;
    const double* brow = b.data.data() + k * b.cols;
    for (std::int64_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = out.data.data() + i * out.cols;
      for (std::int64_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

DenseMatrix matmul_tb(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.cols)
    throw std::invalid_argument("matmul_tb: trailing dimensions disagree (" +
                                std::to_string(a.cols) + " vs " + std::to_string(b.cols) + ")");
  DenseMatrix out(a.rows, b.rows, 0.0);
  for (std::int64_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    for (std::int64_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data.data() + j * b.cols;
      double acc = 0.0;
      for (std::int64_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

DenseMatrix spmm(const SparseMatrix& p, const DenseMatrix& x) {
  if (p.cols != x.rows)
    throw std::invalid_argument("spmm: inner dimensions disagree (" + std::to_string(p.cols) +
                                " vs " + std::to_string(x.rows) + ")");
  DenseMatrix out(p.rows, x.cols, 0.0);
  for (std::int64_t i = 0; i < p.rows; ++i) {
    double* orow = out.data.data() + i * out.cols;
    for (std::int64_t e = p.row_offsets[static_cast<std::size_t>(i)];
         e < p.row_offsets[static_cast<std::size_t>(i) + 1]; ++e) {
      const double w = p.values[static_cast<std::size_t>(e)];
      const std::int64_t k = p.col_indices[static_cast<std::size_t>(e)];
      const double* xrow = x.data.data() + k * x.cols;
      for (std::int64_t j = 0; j < x.cols; ++j) orow[j] += w * xrow[j];
    }
  }
  return out;
}

RowNormalized row_l2_normalize(const DenseMatrix& x, double eps) {
  RowNormalized out;
  out.unit = DenseMatrix(x.rows, x.cols, 0.0);
  out.norms.assign(static_cast<std::size_t>(x.rows), 0.0);
  for (std::int64_t i = 0; i < x.rows; ++i) {
    double sq = 0.0;
    const double* xrow = x.data.data() + i * x.cols;
    for (std::int64_t j = 0; j < x.cols; ++j) sq += xrow[j] * xrow[j];
    const double norm = std::sqrt(sq);
    out.norms[static_cast<std::size_t>(i)] = norm;
    if (norm <= eps) continue;  // zero rows stay zero
    double* urow = out.unit.data.data() + i * x.cols;
    for (std::int64_t j = 0; j < x.cols; ++j) urow[j] = xrow[j] / norm;
  }
  return out;
}

DenseMatrix row_l2_normalize_backward(const DenseMatrix& grad_out, const DenseMatrix& x,
                                      const std::vector<double>& norms, double eps) {
  if (!grad_out.same_shape(x))
    throw std::invalid_argument("row_l2_normalize_backward: shape mismatch");
  DenseMatrix grad_in(x.rows, x.cols, 0.0);
  for (std::int64_t i = 0; i < x.rows; ++i) {
    const double norm = norms[static_cast<std::size_t>(i)];
    if (norm <= eps) continue;  // normalize() emitted a constant zero row
    const double* g = grad_out.data.data() + i * x.cols;
    const double* xrow = x.data.data() + i * x.cols;
    double dot = 0.0;  // <g, z> with z the unit row
    for (std::int64_t j = 0; j < x.cols; ++j) dot += g[j] * (xrow[j] / norm);
    double* o = grad_in.data.data() + i * x.cols;
    for (std::int64_t j = 0; j < x.cols; ++j) o[j] = (g[j] - dot * (xrow[j] / norm)) / norm;
  }
  return grad_in;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  state.step += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

DenseMatrix dropout_mask(Rng& rng, double rate, std::int64_t rows, std::int64_t cols) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout_mask: rate must lie in [0, 1)");
  DenseMatrix mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;  // identity mask, RNG untouched
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data) m = (rng.uniform() < rate) ? 0.0 : keep_scale;
  return mask;
}

}  // namespace normprop
