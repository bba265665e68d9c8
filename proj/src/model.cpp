#include "normprop/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "json.hpp"

namespace normprop {

namespace {

void check_hyper(const Hyper& hyper, const char* who) {
  if (hyper.k < 0) throw std::invalid_argument(std::string(who) + ": k must be nonnegative");
  if (hyper.hidden < 1) throw std::invalid_argument(std::string(who) + ": hidden must be positive");
  if (hyper.embed_dim < 2)
    throw std::invalid_argument(std::string(who) + ": embed_dim must be at least 2");
  if (hyper.dropout < 0.0 || hyper.dropout >= 1.0)
    throw std::invalid_argument(std::string(who) + ": dropout must lie in [0, 1)");
}

void check_params(const ModelParams& params, const Hyper& hyper, std::int64_t input_dim,
                  const char* who) {
  if (params.w1.rows != input_dim || params.w1.cols != hyper.hidden ||
      static_cast<std::int64_t>(params.b1.size()) != hyper.hidden ||
      params.w2.rows != hyper.hidden || params.w2.cols != hyper.embed_dim ||
      static_cast<std::int64_t>(params.b2.size()) != hyper.embed_dim)
    throw std::invalid_argument(std::string(who) +
                                ": parameter shapes do not match the hyperparameters");
}

// x * w + b broadcast over rows.
DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w, const std::vector<double>& b) {
  DenseMatrix out = matmul(x, w);
  for (std::int64_t i = 0; i < out.rows; ++i) {
    double* row = out.data.data() + i * out.cols;
    for (std::int64_t j = 0; j < out.cols; ++j) row[j] += b[static_cast<std::size_t>(j)];
  }
  return out;
}

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

std::vector<double> column_sums(const DenseMatrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.cols), 0.0);
  for (std::int64_t i = 0; i < m.rows; ++i)
    for (std::int64_t j = 0; j < m.cols; ++j) out[static_cast<std::size_t>(j)] += m(i, j);
  return out;
}

}  // namespace

ForwardCache forward(const ModelParams& params, const Graph& g, const SparseMatrix& p,
                     const Hyper& hyper, Rng& rng, bool training) {
  check_hyper(hyper, "forward");
  check_params(params, hyper, g.num_features, "forward");
  if (p.rows != g.num_nodes || p.cols != g.num_nodes)
    throw std::invalid_argument("forward: propagation operator does not match the graph");

  ForwardCache cache;
  const double rate = training ? hyper.dropout : 0.0;

  cache.mask_in = dropout_mask(rng, rate, g.num_nodes, g.num_features);
  cache.x_dropped = hadamard(g.features, cache.mask_in);
  cache.pre_act = affine(cache.x_dropped, params.w1, params.b1);

  cache.relu_out = cache.pre_act;
  for (double& v : cache.relu_out.data) v = v > 0.0 ? v : 0.0;

  cache.mask_hidden = dropout_mask(rng, rate, g.num_nodes, hyper.hidden);
  cache.hidden_dropped = hadamard(cache.relu_out, cache.mask_hidden);
  cache.embed = affine(cache.hidden_dropped, params.w2, params.b2);

  RowNormalized normed = row_l2_normalize(cache.embed);
  cache.z0 = std::move(normed.unit);
  cache.embed_norms = std::move(normed.norms);

  cache.zk = cache.z0;
  for (std::int64_t step = 0; step < hyper.k; ++step) cache.zk = spmm(p, cache.zk);
  return cache;
}

ParamGrads backward(const ForwardCache& cache, const ModelParams& params, const SparseMatrix& p,
                    const DenseMatrix& grad_zk, const Hyper& hyper) {
  check_hyper(hyper, "backward");
  if (!grad_zk.same_shape(cache.zk))
    throw std::invalid_argument("backward: grad_zk shape does not match the cached Z^K");
  if (cache.x_dropped.cols != params.w1.rows || cache.hidden_dropped.cols != params.w2.rows)
    throw std::invalid_argument("backward: cache does not match the parameters");

  // P is symmetric, so the adjoint of K sparse products is K more of them.
  DenseMatrix grad_z0 = grad_zk;
  for (std::int64_t step = 0; step < hyper.k; ++step) grad_z0 = spmm(p, grad_z0);

  DenseMatrix grad_embed = row_l2_normalize_backward(grad_z0, cache.embed, cache.embed_norms);

  ParamGrads grads;
  grads.w2 = matmul_ta(cache.hidden_dropped, grad_embed);
  grads.b2 = column_sums(grad_embed);

  DenseMatrix grad_hidden = matmul_tb(grad_embed, params.w2);
  grad_hidden = hadamard(grad_hidden, cache.mask_hidden);
  for (std::size_t i = 0; i < grad_hidden.data.size(); ++i)
    if (cache.pre_act.data[i] <= 0.0) grad_hidden.data[i] = 0.0;

  grads.w1 = matmul_ta(cache.x_dropped, grad_hidden);
  grads.b1 = column_sums(grad_hidden);
  return grads;
}

Prediction predict(const DenseMatrix& zk, const PrototypeSet& protos) {
  if (zk.cols != protos.dim)
    throw std::invalid_argument("predict: embedding dimension does not match the prototypes");

  Prediction out;
  out.labels.assign(static_cast<std::size_t>(zk.rows), 0);
  out.zero_row.assign(static_cast<std::size_t>(zk.rows), 0);
  for (std::int64_t i = 0; i < zk.rows; ++i) {
    double sq = 0.0;
    for (std::int64_t j = 0; j < zk.cols; ++j) sq += zk(i, j) * zk(i, j);
    const double norm = std::sqrt(sq);
    if (norm <= kNormEps) {
      out.zero_row[static_cast<std::size_t>(i)] = 1;
      out.num_zero_rows += 1;
      continue;  // class 0 by convention
    }
    double best = -std::numeric_limits<double>::infinity();
    std::int64_t best_c = 0;
    for (std::int64_t c = 0; c < protos.num_classes; ++c) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < zk.cols; ++j) dot += zk(i, j) * protos.rows(c, j);
      const double cosine = dot / norm;  // prototype rows are unit norm
      if (cosine > best) {
        best = cosine;
        best_c = c;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = best_c;
  }
  return out;
}

ModelParams init_params(const Hyper& hyper, std::int64_t input_dim, Rng& rng) {
  check_hyper(hyper, "init_params");
  if (input_dim < 1) throw std::invalid_argument("init_params: input_dim must be positive");

  auto kaiming_uniform = [&rng](DenseMatrix& w, std::int64_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w.data) v = (2.0 * rng.uniform() - 1.0) * limit;
  };

  ModelParams params;
  params.w1 = DenseMatrix(input_dim, hyper.hidden, 0.0);
  kaiming_uniform(params.w1, input_dim);
  params.b1.assign(static_cast<std::size_t>(hyper.hidden), 0.0);
  params.w2 = DenseMatrix(hyper.hidden, hyper.embed_dim, 0.0);
  kaiming_uniform(params.w2, hyper.hidden);
  params.b2.assign(static_cast<std::size_t>(hyper.embed_dim), 0.0);
  return params;
}

void save_checkpoint(const ModelParams& params, const Hyper& hyper, const std::string& path) {
  check_hyper(hyper, "save_checkpoint");
  check_params(params, hyper, params.w1.rows, "save_checkpoint");

  nlohmann::ordered_json j;
  j["input_dim"] = params.w1.rows;
  j["hyper"] = {{"k", hyper.k},
                {"hidden", hyper.hidden},
                {"embed_dim", hyper.embed_dim},
                {"dropout", hyper.dropout}};
  j["shapes"] = {{"w1", {params.w1.rows, params.w1.cols}},
                 {"b1", {static_cast<std::int64_t>(params.b1.size())}},
                 {"w2", {params.w2.rows, params.w2.cols}},
                 {"b2", {static_cast<std::int64_t>(params.b2.size())}}};
  j["w1"] = params.w1.data;
  j["b1"] = params.b1;
  j["w2"] = params.w2.data;
  j["b2"] = params.b2;

  std::ofstream out(path);
  if (!out) throw DataError("checkpoint file " + path + ": cannot open for writing");
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string context = "checkpoint file " + path;
  std::ifstream in(path);
  if (!in) throw DataError(context + ": cannot open for reading");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(context + ": " + e.what());
  }

  for (const char* key : {"input_dim", "hyper", "shapes", "w1", "b1", "w2", "b2"})
    if (!j.contains(key)) throw DataError(context + ": missing field \"" + key + "\"");

  Checkpoint ck;
  const auto& h = j["hyper"];
  for (const char* key : {"k", "hidden", "embed_dim", "dropout"})
    if (!h.contains(key)) throw DataError(context + ": hyper block is missing \"" + key + "\"");
  ck.hyper.k = h["k"].get<std::int64_t>();
  ck.hyper.hidden = h["hidden"].get<std::int64_t>();
  ck.hyper.embed_dim = h["embed_dim"].get<std::int64_t>();
  ck.hyper.dropout = h["dropout"].get<double>();

  const std::int64_t input_dim = j["input_dim"].get<std::int64_t>();
  auto read_matrix = [&](const char* key, std::int64_t rows, std::int64_t cols) {
    DenseMatrix m(rows, cols, 0.0);
    const auto& arr = j[key];
    if (!arr.is_array() || static_cast<std::int64_t>(arr.size()) != rows * cols)
      throw DataError(context + ": \"" + key + "\" must hold exactly " +
                      std::to_string(rows * cols) + " numbers");
    for (std::size_t i = 0; i < arr.size(); ++i) m.data[i] = arr[i].get<double>();
    return m;
  };
  auto read_vector = [&](const char* key, std::int64_t size) {
    const auto& arr = j[key];
    if (!arr.is_array() || static_cast<std::int64_t>(arr.size()) != size)
      throw DataError(context + ": \"" + key + "\" must hold exactly " + std::to_string(size) +
                      " numbers");
    std::vector<double> v(static_cast<std::size_t>(size));
    for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
    return v;
  };

  ck.params.w1 = read_matrix("w1", input_dim, ck.hyper.hidden);
  ck.params.b1 = read_vector("b1", ck.hyper.hidden);
  ck.params.w2 = read_matrix("w2", ck.hyper.hidden, ck.hyper.embed_dim);
  ck.params.b2 = read_vector("b2", ck.hyper.embed_dim);

  try {
    check_hyper(ck.hyper, "load_checkpoint");
  } catch (const std::invalid_argument& e) {
    throw DataError(context + ": " + e.what());
  }
  return ck;
}

}  // namespace normprop
