#pragma once

#include <cstdint>
#include <vector>

#include "normprop/graph.hpp"
#include "normprop/prototypes.hpp"
#include "normprop/tensor.hpp"

namespace normprop {

/// Mixing weight, confidence threshold, and warm-up length for the unified
/// training loss.
struct LossConfig {
  double lambda = 1.0;            // in [0, 2]
  double tau = 0.8;               // in [0, 1]
  std::int64_t warmup_epochs = 10;
};

/// Per-epoch supervision summary.
struct LossReport {
  double classification_loss = 0.0;
  double regularization = 0.0;
  double total = 0.0;
  std::int64_t omega_size = 0;
  double global_bias = 0.0;  // NaN when some node is unlabeled
};

/// A scalar objective plus its gradient with respect to Z^K.
struct ScalarWithGrad {
  double value = 0.0;
  DenseMatrix grad;
};

struct TotalLoss {
  LossReport report;
  DenseMatrix grad;
};

/// Mean over the train set of (1 - cos(Z^K_i, P_{y_i})). A zero embedding row
/// contributes 1 to the mean with a zero gradient (cosine taken as 0).
ScalarWithGrad classification_loss(const DenseMatrix& zk, const PrototypeSet& protos,
                                   const std::vector<std::int64_t>& labels,
                                   const std::vector<std::int64_t>& train_mask);

/// Omega_tau: non-excluded nodes whose best prototype cosine reaches tau.
/// Zero rows have no cosine and are never selected. Returned sorted.
std::vector<std::int64_t> confident_set(const DenseMatrix& zk, const PrototypeSet& protos,
                                        double tau, const std::vector<std::int64_t>& exclude);

/// zeta_i = ||Z^K_i|| / bound_i, in [0, 1] up to rounding.
std::vector<double> consistent_metric(const DenseMatrix& zk, const std::vector<double>& bound);

/// L_h = 1 - mean over omega of zeta. Empty omega gives 0 with a zero
/// gradient; zero rows contribute zeta = 0 with a zero gradient.
ScalarWithGrad homophilous_regularization(const DenseMatrix& zk, const std::vector<double>& bound,
                                          const std::vector<std::int64_t>& omega);

/// The unified objective: classification only while epoch < warmup or when
/// lambda is 0 (the confident set is not even computed); afterwards
/// L_c + lambda * L_h with omega recomputed from the current Z^K. The report
/// also carries the global-bias diagnostic (NaN unless every node is labeled).
TotalLoss total_loss(const DenseMatrix& zk, const PrototypeSet& protos,
                     const std::vector<std::int64_t>& labels, const SplitMasks& masks,
                     const std::vector<double>& bound, const LossConfig& cfg, std::int64_t epoch);

/// Mean over every node of (1 - cos(Z^K_i, P_{y_i})). Requires all labels;
/// equals classification_loss with a full train mask, bit for bit.
double global_bias(const DenseMatrix& zk, const PrototypeSet& protos,
                   const std::vector<std::int64_t>& labels);

/// Propagate Z^0 and a copy with rows outside omega zeroed, K steps each;
/// report the per-node inner product of the two propagated views. With omega
/// covering every node the report equals the squared norms of Z^K exactly.
std::vector<double> masked_view_check(const DenseMatrix& z0, const SparseMatrix& p, std::int64_t k,
                                      const std::vector<std::int64_t>& omega);

}  // namespace normprop
