#pragma once

#include <cstdint>
#include <string>

#include "normprop/tensor.hpp"

namespace normprop {

/// Unit-norm class anchor vectors on the d'-sphere, one row per class.
/// Solved once, then frozen: training never moves them.
struct PrototypeSet {
  std::int64_t num_classes = 0;
  std::int64_t dim = 0;
  DenseMatrix rows;  // num_classes x dim, each row unit norm
};

/// Mean over rows of the largest cosine to any other row:
/// (1/C) sum_i max_j (P P^T - 2I)_ij. The -2I shift pushes the diagonal to
/// -1 so the max picks an off-diagonal entry whenever one beats -1.
double separation_loss(const PrototypeSet& p);

/// Projected gradient descent on separation_loss from a normalized Gaussian
/// start. Each step differentiates the row-wise max (ties resolved to the
/// first maximizing index), descends with a linearly decaying step size, and
/// re-projects rows to the sphere. Returns the best iterate evaluated.
PrototypeSet solve_prototypes(std::int64_t num_classes, std::int64_t dim, std::int64_t iters,
                              double lr, Rng& rng);

/// Min over unordered pairs of cos(P_i, P_j); lower means better separated.
double min_pairwise_cosine(const PrototypeSet& p);

PrototypeSet load_prototypes(const std::string& path);
void save_prototypes(const PrototypeSet& p, const std::string& path);

}  // namespace normprop
