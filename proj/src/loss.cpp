#include "normprop/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace normprop {

namespace {

double row_norm(const DenseMatrix& m, std::int64_t i) {
  double sq = 0.0;
  const double* row = m.data.data() + i * m.cols;
  for (std::int64_t j = 0; j < m.cols; ++j) sq += row[j] * row[j];
  return std::sqrt(sq);
}

double dot_proto(const DenseMatrix& zk, std::int64_t i, const PrototypeSet& protos,
                 std::int64_t c) {
  double acc = 0.0;
  const double* z = zk.data.data() + i * zk.cols;
  const double* p = protos.rows.data.data() + c * protos.rows.cols;
  for (std::int64_t j = 0; j < zk.cols; ++j) acc += z[j] * p[j];
  return acc;
}

// Shared by classification_loss and global_bias so the two stay bit-identical
// on identical node sequences: one (1 - cos) term per node, zero rows counted
// as cosine 0 with no gradient.
double cosine_term(const DenseMatrix& zk, const PrototypeSet& protos, std::int64_t node,
                   std::int64_t label, double* out_norm) {
  const double norm = row_norm(zk, node);
  *out_norm = norm;
  if (norm <= kNormEps) return 1.0;  // zero row: cosine treated as 0
  return 1.0 - dot_proto(zk, node, protos, label) / norm;
}

std::vector<std::uint8_t> membership(std::int64_t n, const std::vector<std::int64_t>& ids,
                                     const char* who) {
  std::vector<std::uint8_t> in(static_cast<std::size_t>(n), 0);
  for (std::int64_t id : ids) {
    if (id < 0 || id >= n)
      throw std::invalid_argument(std::string(who) + ": node index " + std::to_string(id) +
                                  " is out of range");
    in[static_cast<std::size_t>(id)] = 1;
  }
  return in;
}

}  // namespace

ScalarWithGrad classification_loss(const DenseMatrix& zk, const PrototypeSet& protos,
                                   const std::vector<std::int64_t>& labels,
                                   const std::vector<std::int64_t>& train_mask) {
  if (zk.cols != protos.dim)
    throw std::invalid_argument("classification_loss: embedding dim does not match prototypes");
  if (static_cast<std::int64_t>(labels.size()) != zk.rows)
    throw std::invalid_argument("classification_loss: labels length does not match Z^K");
  if (train_mask.empty()) throw DataError("classification_loss: the train mask is empty");

  ScalarWithGrad out;
  out.grad = DenseMatrix(zk.rows, zk.cols, 0.0);
  const double inv_count = 1.0 / static_cast<double>(train_mask.size());

  double total = 0.0;
  for (std::int64_t i : train_mask) {
    if (i < 0 || i >= zk.rows)
      throw std::invalid_argument("classification_loss: train node " + std::to_string(i) +
                                  " is out of range");
    const std::int64_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= protos.num_classes)
      throw DataError("classification_loss: train node " + std::to_string(i) +
                      " has no usable label");

    double norm = 0.0;
    total += cosine_term(zk, protos, i, y, &norm);
    if (norm <= kNormEps) continue;  // no direction to move a zero row in

    // d/dz of -cos(z, P) = -(P - cos * z_hat) / ||z||, averaged over the mask.
    const double cosine = dot_proto(zk, i, protos, y) / norm;
    double* g = out.grad.data.data() + i * zk.cols;
    const double* z = zk.data.data() + i * zk.cols;
    for (std::int64_t j = 0; j < zk.cols; ++j) {
      const double unit = z[j] / norm;
      g[j] = -(protos.rows(y, j) - cosine * unit) * inv_count / norm;
    }
  }
  out.value = total * inv_count;
  return out;
}

std::vector<std::int64_t> confident_set(const DenseMatrix& zk, const PrototypeSet& protos,
                                        double tau, const std::vector<std::int64_t>& exclude) {
  if (tau < 0.0 || tau > 1.0)
    throw std::invalid_argument("confident_set: tau must lie in [0, 1]");
  const std::vector<std::uint8_t> excluded = membership(zk.rows, exclude, "confident_set");

  std::vector<std::int64_t> omega;
  for (std::int64_t i = 0; i < zk.rows; ++i) {
    if (excluded[static_cast<std::size_t>(i)]) continue;
    const double norm = row_norm(zk, i);
    if (norm <= kNormEps) continue;  // zero rows have no cosine
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < protos.num_classes; ++c)
      best = std::max(best, dot_proto(zk, i, protos, c) / norm);
    if (best >= tau) omega.push_back(i);
  }
  return omega;
}

std::vector<double> consistent_metric(const DenseMatrix& zk, const std::vector<double>& bound) {
  if (static_cast<std::int64_t>(bound.size()) != zk.rows)
    throw std::invalid_argument("consistent_metric: bound length does not match Z^K");
  std::vector<double> zeta(static_cast<std::size_t>(zk.rows), 0.0);
  for (std::int64_t i = 0; i < zk.rows; ++i) {
    if (bound[static_cast<std::size_t>(i)] <= 0.0)
      throw std::invalid_argument("consistent_metric: bound entries must be positive");
    zeta[static_cast<std::size_t>(i)] = row_norm(zk, i) / bound[static_cast<std::size_t>(i)];
  }
  return zeta;
}

ScalarWithGrad homophilous_regularization(const DenseMatrix& zk, const std::vector<double>& bound,
                                          const std::vector<std::int64_t>& omega) {
  if (static_cast<std::int64_t>(bound.size()) != zk.rows)
    throw std::invalid_argument("homophilous_regularization: bound length does not match Z^K");

  ScalarWithGrad out;
  out.grad = DenseMatrix(zk.rows, zk.cols, 0.0);
  if (omega.empty()) {
    out.value = 0.0;  // 1/|omega| is undefined; warm-up makes this common
    return out;
  }

  const double inv_count = 1.0 / static_cast<double>(omega.size());
  double zeta_sum = 0.0;
  for (std::int64_t i : omega) {
    if (i < 0 || i >= zk.rows)
      throw std::invalid_argument("homophilous_regularization: node " + std::to_string(i) +
                                  " is out of range");
    const double b = bound[static_cast<std::size_t>(i)];
    if (b <= 0.0)
      throw std::invalid_argument("homophilous_regularization: bound entries must be positive");
    const double norm = row_norm(zk, i);
    zeta_sum += norm / b;
    if (norm <= kNormEps) continue;

    // d/dz of -||z|| / (b |omega|) = -z_hat / (b |omega|).
    double* g = out.grad.data.data() + i * zk.cols;
    const double* z = zk.data.data() + i * zk.cols;
    for (std::int64_t j = 0; j < zk.cols; ++j) g[j] = -(z[j] / norm) * inv_count / b;
  }
  out.value = 1.0 - zeta_sum * inv_count;
  return out;
}

TotalLoss total_loss(const DenseMatrix& zk, const PrototypeSet& protos,
                     const std::vector<std::int64_t>& labels, const SplitMasks& masks,
                     const std::vector<double>& bound, const LossConfig& cfg, std::int64_t epoch) {
  if (cfg.lambda < 0.0 || cfg.lambda > 2.0)
    throw std::invalid_argument("total_loss: lambda must lie in [0, 2]");
  if (cfg.tau < 0.0 || cfg.tau > 1.0)
    throw std::invalid_argument("total_loss: tau must lie in [0, 1]");
  if (cfg.warmup_epochs < 0)
    throw std::invalid_argument("total_loss: warmup_epochs must be nonnegative");
  if (epoch < 0) throw std::invalid_argument("total_loss: epoch must be nonnegative");

  TotalLoss out;
  ScalarWithGrad cls = classification_loss(zk, protos, labels, masks.train);
  out.report.classification_loss = cls.value;
  out.grad = std::move(cls.grad);

  const bool regularize = cfg.lambda > 0.0 && epoch >= cfg.warmup_epochs;
  if (regularize) {
    const std::vector<std::int64_t> omega = confident_set(zk, protos, cfg.tau, masks.train);
    ScalarWithGrad reg = homophilous_regularization(zk, bound, omega);
    out.report.regularization = reg.value;
    out.report.omega_size = static_cast<std::int64_t>(omega.size());
    for (std::size_t i = 0; i < out.grad.data.size(); ++i)
      out.grad.data[i] += cfg.lambda * reg.grad.data[i];
  }
  out.report.total = out.report.classification_loss + cfg.lambda * out.report.regularization;

  const bool fully_labeled =
      std::all_of(labels.begin(), labels.end(), [](std::int64_t y) { return y >= 0; });
  out.report.global_bias = fully_labeled ? global_bias(zk, protos, labels)
                                         : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double global_bias(const DenseMatrix& zk, const PrototypeSet& protos,
                   const std::vector<std::int64_t>& labels) {
  if (zk.cols != protos.dim)
    throw std::invalid_argument("global_bias: embedding dim does not match prototypes");
  if (static_cast<std::int64_t>(labels.size()) != zk.rows)
    throw std::invalid_argument("global_bias: labels length does not match Z^K");

  const double inv_count = 1.0 / static_cast<double>(zk.rows);
  double total = 0.0;
  for (std::int64_t i = 0; i < zk.rows; ++i) {
    const std::int64_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= protos.num_classes)
      throw DataError("global_bias: node " + std::to_string(i) +
                      " is unlabeled; the diagnostic needs every label");
    double norm = 0.0;
    total += cosine_term(zk, protos, i, y, &norm);
  }
  return total * inv_count;
}

std::vector<double> masked_view_check(const DenseMatrix& z0, const SparseMatrix& p, std::int64_t k,
                                      const std::vector<std::int64_t>& omega) {
  if (k < 0) throw std::invalid_argument("masked_view_check: k must be nonnegative");
  if (p.rows != z0.rows || p.cols != z0.rows)
    throw std::invalid_argument("masked_view_check: propagation operator does not match Z^0");
  const std::vector<std::uint8_t> keep = membership(z0.rows, omega, "masked_view_check");

  DenseMatrix masked(z0.rows, z0.cols, 0.0);
  for (std::int64_t i = 0; i < z0.rows; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    for (std::int64_t j = 0; j < z0.cols; ++j) masked(i, j) = z0(i, j);
  }

  DenseMatrix full = z0;
  for (std::int64_t step = 0; step < k; ++step) {
    full = spmm(p, full);
    masked = spmm(p, masked);
  }

  std::vector<double> report(static_cast<std::size_t>(z0.rows), 0.0);
  for (std::int64_t i = 0; i < z0.rows; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < z0.cols; ++j) acc += full(i, j) * masked(i, j);
    report[static_cast<std::size_t>(i)] = acc;
  }
  return report;
}

}  // namespace normprop
