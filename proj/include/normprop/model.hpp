#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "normprop/graph.hpp"
#include "normprop/prototypes.hpp"
#include "normprop/tensor.hpp"

namespace normprop {

/// Architecture and propagation hyperparameters.
struct Hyper {
  std::int64_t k = 2;          // propagation steps
  std::int64_t hidden = 64;    // MLP hidden width
  std::int64_t embed_dim = 32; // prototype space dimension d'
  double dropout = 0.3;        // applied at the input of each linear layer
};

/// Two-layer MLP encoder parameters.
struct ModelParams {
  DenseMatrix w1;          // input_dim x hidden
  std::vector<double> b1;  // hidden
  DenseMatrix w2;          // hidden x embed_dim
  std::vector<double> b2;  // embed_dim
};

/// Gradients, shaped exactly like ModelParams.
struct ParamGrads {
  DenseMatrix w1;
  std::vector<double> b1;
  DenseMatrix w2;
  std::vector<double> b2;
};

/// Every intermediate the backward pass needs, captured by forward().
struct ForwardCache {
  DenseMatrix x_dropped;       // features after input dropout
  DenseMatrix pre_act;         // first affine output, before ReLU
  DenseMatrix relu_out;        // after ReLU
  DenseMatrix hidden_dropped;  // ReLU output after hidden dropout
  DenseMatrix mask_in;         // dropout masks (all ones when not training)
  DenseMatrix mask_hidden;
  DenseMatrix embed;                // H, n x d'
  std::vector<double> embed_norms;  // raw row norms of H
  DenseMatrix z0;                   // row-normalized H
  DenseMatrix zk;                   // K-step propagated embedding
};

/// Node predictions plus a diagnostic for all-zero embedding rows (which are
/// assigned class 0 rather than erroring).
struct Prediction {
  std::vector<std::int64_t> labels;
  std::vector<std::uint8_t> zero_row;
  std::int64_t num_zero_rows = 0;
};

/// Encode -> L2 normalize -> propagate. `p` must be renormalized_adjacency(g).
/// Dropout fires only when `training` is set; inference consumes no
/// randomness. Z^K is built by k successive sparse products, never a dense
/// matrix power.
ForwardCache forward(const ModelParams& params, const Graph& g, const SparseMatrix& p,
                     const Hyper& hyper, Rng& rng, bool training);

/// Hand-derived adjoint of forward(): propagation transposes to itself
/// (P is symmetric), then normalize-backward, then the MLP adjoints.
ParamGrads backward(const ForwardCache& cache, const ModelParams& params, const SparseMatrix& p,
                    const DenseMatrix& grad_zk, const Hyper& hyper);

/// Nearest prototype by cosine; ties break to the lowest class index.
Prediction predict(const DenseMatrix& zk, const PrototypeSet& protos);

/// Kaiming-uniform fan-in weights (U(-sqrt(6/fan_in), +sqrt(6/fan_in))),
/// zero biases. Deterministic per rng state.
ModelParams init_params(const Hyper& hyper, std::int64_t input_dim, Rng& rng);

struct Checkpoint {
  ModelParams params;
  Hyper hyper;
};

void save_checkpoint(const ModelParams& params, const Hyper& hyper, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace normprop
