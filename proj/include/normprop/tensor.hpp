#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace normprop {

/// Raised for malformed input files and infeasible data (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Guard for row normalization: rows with L2 norm below this are treated as zero.
inline constexpr double kNormEps = 1e-12;

/// Row-major dense matrix of 64-bit floats.
struct DenseMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::int64_t r, std::int64_t c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r * c), fill) {}

  double& operator()(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(i * cols + j)]; }
  double operator()(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(i * cols + j)]; }

  std::span<double> row(std::int64_t i) { return {data.data() + i * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(std::int64_t i) const { return {data.data() + i * cols, static_cast<std::size_t>(cols)}; }

  static DenseMatrix identity(std::int64_t n);

  bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
};

/// CSR sparse matrix. When it represents a propagation operator, all values
/// are nonnegative and column indices are strictly increasing within a row.
struct SparseMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::int64_t> row_offsets;  // rows+1 entries, nondecreasing, last == nnz
  std::vector<std::int64_t> col_indices;
  std::vector<double> values;

  std::int64_t nnz() const { return static_cast<std::int64_t>(values.size()); }
};

/// Counter-based pseudo-random generator (splitmix64). The stream is a pure
/// function of the seed, so identical seeds give identical streams on every
/// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();

  /// Uniform in (0, 1]; safe as a log() argument.
  double uniform_open();

  /// Standard normal via Box-Muller; consumes exactly two raw draws.
  double normal();

  /// Uniform integer in [0, n); rejection-sampled, so unbiased.
  std::int64_t bounded(std::int64_t n);

 private:
  std::uint64_t state_;
};

/// Adam optimizer state for one parameter vector.
struct AdamState {
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 0.01;

  explicit AdamState(std::size_t size, double learning_rate = 0.01)
      : m(size, 0.0), v(size, 0.0), lr(learning_rate) {}
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// aᵀ · b without materializing the transpose.
DenseMatrix matmul_ta(const DenseMatrix& a, const DenseMatrix& b);

/// a · bᵀ without materializing the transpose.
DenseMatrix matmul_tb(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix spmm(const SparseMatrix& p, const DenseMatrix& x);

struct RowNormalized {
  DenseMatrix unit;            // row i = x_i / max(|x_i|, eps)
  std::vector<double> norms;   // raw row norms
};

RowNormalized row_l2_normalize(const DenseMatrix& x, double eps = kNormEps);

/// Adjoint of row_l2_normalize: per row, (g - (g.z)z) / |x| with z the unit
/// row; rows at or below eps receive zero gradient.
DenseMatrix row_l2_normalize_backward(const DenseMatrix& grad_out, const DenseMatrix& x,
                                      const std::vector<double>& norms, double eps = kNormEps);

/// Bias-corrected Adam update, in place. Advances state.step.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Inverted dropout mask: entries are 0 with probability rate, else 1/(1-rate).
/// rate == 0 returns all ones without consuming randomness.
DenseMatrix dropout_mask(Rng& rng, double rate, std::int64_t rows, std::int64_t cols);

}  // namespace normprop
