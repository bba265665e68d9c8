#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "normprop/tensor.hpp"

namespace normprop {

/// Materialized node index lists for a train/val/test partition.
struct SplitMasks {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> val;
  std::vector<std::int64_t> test;
};

/// Recipe for sampling a few-shot partition.
struct SplitSpec {
  std::int64_t shots_per_class = 3;
  std::int64_t val_per_class = 30;
  std::uint64_t seed = 0;
};

/// Undirected attributed graph. Edges are stored once as (u, v) with u < v,
/// deduplicated and sorted lexicographically; self loops are never stored
/// (the propagation operator adds its own). labels[i] == -1 marks an
/// unlabeled node (serialized as null).
struct Graph {
  std::int64_t num_nodes = 0;
  std::int64_t num_features = 0;
  std::int64_t num_classes = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  DenseMatrix features;  // num_nodes x num_features
  std::vector<std::int64_t> labels;
  std::optional<SplitMasks> splits;
};

/// Stochastic block model with Gaussian class-mean features.
struct SbmParams {
  std::int64_t num_classes = 2;
  std::int64_t nodes_per_class = 50;
  double p_intra = 0.05;
  double p_inter = 0.005;
  std::int64_t feature_dim = 16;
  double class_mean_separation = 1.0;
  double noise_sigma = 1.0;
};

/// Throws DataError when a graph violates the schema (shape mismatches,
/// out-of-range indices, duplicate edges, unlabeled train nodes, ...).
/// `context` prefixes messages.
void validate_graph(const Graph& g, const std::string& context);

/// Symmetrically renormalized adjacency with self loops:
/// P = D̃^{-1/2} (A + I) D̃^{-1/2}, as CSR with sorted column indices.
SparseMatrix renormalized_adjacency(const Graph& g);

/// b = P^k · 1, computed by k successive sparse products. k = 0 gives ones.
std::vector<double> propagation_upper_bound(const SparseMatrix& p, std::int64_t k);

/// Average over non-isolated nodes of the fraction of neighbors sharing the
/// node's label, on the raw adjacency (no self loops). Requires every node
/// to be labeled and at least one edge to exist.
double homophily(const Graph& g);

/// Block layout: node i belongs to class i / nodes_per_class. Features are
/// sigma-noised copies of axis-aligned class means (separation * e_c), which
/// requires feature_dim >= num_classes. Edges are Bernoulli per node pair.
Graph sbm_generate(const SbmParams& params, Rng& rng);

/// Per class: `shots_per_class` training nodes and `val_per_class` validation
/// nodes, chosen by an unbiased shuffle of that class's labeled nodes; every
/// other labeled node lands in test. Each list comes back sorted.
SplitMasks sample_few_shot_split(const Graph& g, const SplitSpec& spec);

Graph load_graph(const std::string& path);
void save_graph(const Graph& g, const std::string& path);

}  // namespace normprop
