#include "normprop/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string>

#include "json.hpp"

namespace normprop {

namespace {

using nlohmann::ordered_json;

std::string edge_str(const std::pair<std::int64_t, std::int64_t>& e) {
  return "[" + std::to_string(e.first) + ", " + std::to_string(e.second) + "]";
}

// Fisher-Yates with the library RNG so splits are reproducible by seed.
void shuffle_indices(std::vector<std::int64_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bounded(static_cast<std::int64_t>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

void validate_graph(const Graph& g, const std::string& context) {
  auto fail = [&](const std::string& what) { throw DataError(context + ": " + what); };

  if (g.num_nodes < 1) fail("num_nodes must be at least 1");
  if (g.num_features < 1) fail("num_features must be at least 1");
  if (g.num_classes < 1) fail("num_classes must be at least 1");
  if (g.features.rows != g.num_nodes || g.features.cols != g.num_features)
    fail("features must be a num_nodes x num_features matrix");
  if (static_cast<std::int64_t>(g.labels.size()) != g.num_nodes)
    fail("labels must list one entry per node");
  for (std::int64_t i = 0; i < g.num_nodes; ++i) {
    const std::int64_t y = g.labels[static_cast<std::size_t>(i)];
    if (y < -1 || y >= g.num_classes)
      fail("label of node " + std::to_string(i) + " is " + std::to_string(y) +
           " but must be null or in [0, " + std::to_string(g.num_classes) + ")");
  }

  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    if (edge.first < 0 || edge.second >= g.num_nodes)
      fail("edge " + std::to_string(e) + " " + edge_str(edge) + " has an endpoint outside [0, " +
           std::to_string(g.num_nodes) + ")");
    if (edge.first >= edge.second)
      fail("edge " + std::to_string(e) + " " + edge_str(edge) +
           " must satisfy u < v (no self loops, one record per edge)");
    if (!seen.insert(edge).second)
      fail("edge " + std::to_string(e) + " " + edge_str(edge) + " appears more than once");
  }

  if (g.splits) {
    const SplitMasks& s = *g.splits;
    std::set<std::int64_t> taken;
    auto check_list = [&](const std::vector<std::int64_t>& ids, const std::string& name) {
      for (std::int64_t id : ids) {
        if (id < 0 || id >= g.num_nodes)
          fail("splits." + name + " contains node " + std::to_string(id) + " outside [0, " +
               std::to_string(g.num_nodes) + ")");
        if (!taken.insert(id).second)
          fail("splits." + name + " repeats node " + std::to_string(id) +
               " already assigned to a split");
      }
    };
    check_list(s.train, "train");
    check_list(s.val, "val");
    check_list(s.test, "test");
    for (std::int64_t id : s.train)
      if (g.labels[static_cast<std::size_t>(id)] < 0)
        fail("splits.train contains node " + std::to_string(id) + " which has no label");
  }
}

SparseMatrix renormalized_adjacency(const Graph& g) {
  const std::int64_t n = g.num_nodes;

  // Neighbor lists including the self loop; edges are u < v so insert both ways.
  std::vector<std::vector<std::int64_t>> nbrs(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) nbrs[static_cast<std::size_t>(i)].push_back(i);
  for (const auto& [u, v] : g.edges) {
    nbrs[static_cast<std::size_t>(u)].push_back(v);
    nbrs[static_cast<std::size_t>(v)].push_back(u);
  }

  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    inv_sqrt_deg[static_cast<std::size_t>(i)] =
        1.0 / std::sqrt(static_cast<double>(nbrs[static_cast<std::size_t>(i)].size()));

  SparseMatrix p;
  p.rows = p.cols = n;
  p.row_offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    auto& row = nbrs[static_cast<std::size_t>(i)];
    std::sort(row.begin(), row.end());
    for (std::int64_t j : row) {
      p.col_indices.push_back(j);
      p.values.push_back(inv_sqrt_deg[static_cast<std::size_t>(i)] *
                         inv_sqrt_deg[static_cast<std::size_t>(j)]);
    }
    p.row_offsets[static_cast<std::size_t>(i) + 1] = static_cast<std::int64_t>(p.col_indices.size());
  }
  return p;
}

std::vector<double> propagation_upper_bound(const SparseMatrix& p, std::int64_t k) {
  if (k < 0) throw std::invalid_argument("propagation_upper_bound: k must be nonnegative");
  DenseMatrix b(p.rows, 1, 1.0);
  for (std::int64_t step = 0; step < k; ++step) b = spmm(p, b);
  return b.data;
}

double homophily(const Graph& g) {
  for (std::int64_t i = 0; i < g.num_nodes; ++i)
    if (g.labels[static_cast<std::size_t>(i)] < 0)
      throw DataError("homophily: node " + std::to_string(i) +
                      " is unlabeled; homophily needs a fully labeled graph");

  // Per-node same-label neighbor fraction on the raw adjacency, averaged over
  // nodes that have at least one neighbor.
  std::vector<std::int64_t> degree(static_cast<std::size_t>(g.num_nodes), 0);
  std::vector<std::int64_t> alike(static_cast<std::size_t>(g.num_nodes), 0);
  for (const auto& [u, v] : g.edges) {
    degree[static_cast<std::size_t>(u)] += 1;
    degree[static_cast<std::size_t>(v)] += 1;
    if (g.labels[static_cast<std::size_t>(u)] == g.labels[static_cast<std::size_t>(v)]) {
      alike[static_cast<std::size_t>(u)] += 1;
      alike[static_cast<std::size_t>(v)] += 1;
    }
  }

  double total = 0.0;
  std::int64_t counted = 0;
  for (std::int64_t i = 0; i < g.num_nodes; ++i) {
    if (degree[static_cast<std::size_t>(i)] == 0) continue;
    total += static_cast<double>(alike[static_cast<std::size_t>(i)]) /
             static_cast<double>(degree[static_cast<std::size_t>(i)]);
    counted += 1;
  }
  if (counted == 0)
    throw DataError("homophily: every node is isolated, the ratio is undefined");
  return total / static_cast<double>(counted);
}

Graph sbm_generate(const SbmParams& params, Rng& rng) {
  if (params.num_classes < 1 || params.nodes_per_class < 1)
    throw DataError("sbm_generate: num_classes and nodes_per_class must be positive");
  if (params.feature_dim < params.num_classes)
    throw DataError("sbm_generate: feature_dim (" + std::to_string(params.feature_dim) +
                    ") must be at least num_classes (" + std::to_string(params.num_classes) +
                    ") so class means can be orthogonal");
  if (params.p_inter < 0.0 || params.p_inter > params.p_intra || params.p_intra > 1.0)
    throw DataError("sbm_generate: edge probabilities must satisfy 0 <= p_inter <= p_intra <= 1");
  if (params.noise_sigma < 0.0) throw DataError("sbm_generate: noise_sigma must be nonnegative");

  Graph g;
  g.num_classes = params.num_classes;
  g.num_nodes = params.num_classes * params.nodes_per_class;
  g.num_features = params.feature_dim;
  g.labels.resize(static_cast<std::size_t>(g.num_nodes));
  for (std::int64_t i = 0; i < g.num_nodes; ++i)
    g.labels[static_cast<std::size_t>(i)] = i / params.nodes_per_class;

  // Draw order is fixed (features node by node, then edges in u < v order) so
  // a seed pins the whole graph.
  g.features = DenseMatrix(g.num_nodes, g.num_features, 0.0);
  for (std::int64_t i = 0; i < g.num_nodes; ++i) {
    const std::int64_t c = g.labels[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < g.num_features; ++j) {
      const double mean = (j == c) ? params.class_mean_separation : 0.0;
      g.features(i, j) = mean + params.noise_sigma * rng.normal();
    }
  }
  for (std::int64_t u = 0; u < g.num_nodes; ++u) {
    for (std::int64_t v = u + 1; v < g.num_nodes; ++v) {
      const bool same = g.labels[static_cast<std::size_t>(u)] == g.labels[static_cast<std::size_t>(v)];
      const double p = same ? params.p_intra : params.p_inter;
      if (rng.uniform() < p) g.edges.emplace_back(u, v);
    }
  }
  return g;
}

SplitMasks sample_few_shot_split(const Graph& g, const SplitSpec& spec) {
  if (spec.shots_per_class < 1)
    throw DataError("sample_few_shot_split: shots_per_class must be positive");
  if (spec.val_per_class < 0)
    throw DataError("sample_few_shot_split: val_per_class must be nonnegative");

  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(g.num_classes));
  for (std::int64_t i = 0; i < g.num_nodes; ++i) {
    const std::int64_t y = g.labels[static_cast<std::size_t>(i)];
    if (y >= 0) by_class[static_cast<std::size_t>(y)].push_back(i);
  }

  Rng rng(spec.seed);
  SplitMasks s;
  for (std::int64_t c = 0; c < g.num_classes; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    const std::int64_t need = spec.shots_per_class + spec.val_per_class;
    if (static_cast<std::int64_t>(pool.size()) < need)
      throw DataError("sample_few_shot_split: class " + std::to_string(c) + " has " +
                      std::to_string(pool.size()) + " labeled nodes but the split needs " +
                      std::to_string(need));
    shuffle_indices(pool, rng);
    for (std::int64_t i = 0; i < spec.shots_per_class; ++i)
      s.train.push_back(pool[static_cast<std::size_t>(i)]);
    for (std::int64_t i = 0; i < spec.val_per_class; ++i)
      s.val.push_back(pool[static_cast<std::size_t>(spec.shots_per_class + i)]);
    for (std::size_t i = static_cast<std::size_t>(need); i < pool.size(); ++i)
      s.test.push_back(pool[i]);
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

namespace {

std::int64_t require_int(const ordered_json& j, const std::string& key, const std::string& context) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw DataError(context + ": missing or non-integer field \"" + key + "\"");
  return j[key].get<std::int64_t>();
}

std::vector<std::int64_t> read_index_list(const ordered_json& arr, const std::string& what,
                                          const std::string& context) {
  if (!arr.is_array()) throw DataError(context + ": " + what + " must be an array");
  std::vector<std::int64_t> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer())
      throw DataError(context + ": " + what + " must hold integers only");
    out.push_back(v.get<std::int64_t>());
  }
  return out;
}

}  // namespace

Graph load_graph(const std::string& path) {
  const std::string context = "graph file " + path;
  std::ifstream in(path);
  if (!in) throw DataError(context + ": cannot open for reading");

  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw DataError(context + ": " + e.what());
  }

  Graph g;
  g.num_nodes = require_int(j, "num_nodes", context);
  g.num_features = require_int(j, "num_features", context);
  g.num_classes = require_int(j, "num_classes", context);

  if (!j.contains("edges") || !j["edges"].is_array())
    throw DataError(context + ": missing or non-array field \"edges\"");
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
      throw DataError(context + ": every edge must be a [u, v] integer pair");
    g.edges.emplace_back(e[0].get<std::int64_t>(), e[1].get<std::int64_t>());
  }

  if (!j.contains("features") || !j["features"].is_array() ||
      static_cast<std::int64_t>(j["features"].size()) != g.num_nodes)
    throw DataError(context + ": \"features\" must be an array with one row per node");
  g.features = DenseMatrix(g.num_nodes, g.num_features, 0.0);
  for (std::int64_t i = 0; i < g.num_nodes; ++i) {
    const auto& row = j["features"][static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<std::int64_t>(row.size()) != g.num_features)
      throw DataError(context + ": features row " + std::to_string(i) + " must hold " +
                      std::to_string(g.num_features) + " numbers");
    for (std::int64_t k = 0; k < g.num_features; ++k) {
      const auto& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number())
        throw DataError(context + ": features row " + std::to_string(i) + " must be numeric");
      g.features(i, k) = v.get<double>();
    }
  }

  if (!j.contains("labels") || !j["labels"].is_array() ||
      static_cast<std::int64_t>(j["labels"].size()) != g.num_nodes)
    throw DataError(context + ": \"labels\" must be an array with one entry per node");
  g.labels.resize(static_cast<std::size_t>(g.num_nodes));
  for (std::int64_t i = 0; i < g.num_nodes; ++i) {
    const auto& v = j["labels"][static_cast<std::size_t>(i)];
    if (v.is_null()) {
      g.labels[static_cast<std::size_t>(i)] = -1;
    } else if (v.is_number_integer()) {
      g.labels[static_cast<std::size_t>(i)] = v.get<std::int64_t>();
    } else {
      throw DataError(context + ": label of node " + std::to_string(i) +
                      " must be an integer or null");
    }
  }

  if (j.contains("splits")) {
    const auto& js = j["splits"];
    if (!js.is_object()) throw DataError(context + ": \"splits\" must be an object");
    SplitMasks s;
    if (js.contains("train")) s.train = read_index_list(js["train"], "splits.train", context);
    if (js.contains("val")) s.val = read_index_list(js["val"], "splits.val", context);
    if (js.contains("test")) s.test = read_index_list(js["test"], "splits.test", context);
    g.splits = std::move(s);
  }

  validate_graph(g, context);
  std::sort(g.edges.begin(), g.edges.end());  // canonical order for saving
  return g;
}

void save_graph(const Graph& g, const std::string& path) {
  validate_graph(g, "save_graph");

  ordered_json j;
  j["num_nodes"] = g.num_nodes;
  j["num_features"] = g.num_features;
  j["num_classes"] = g.num_classes;
  j["edges"] = ordered_json::array();
  for (const auto& [u, v] : g.edges) j["edges"].push_back({u, v});
  j["features"] = ordered_json::array();
  for (std::int64_t i = 0; i < g.num_nodes; ++i) {
    ordered_json row = ordered_json::array();
    for (std::int64_t k = 0; k < g.num_features; ++k) row.push_back(g.features(i, k));
    j["features"].push_back(std::move(row));
  }
  j["labels"] = ordered_json::array();
  for (std::int64_t y : g.labels) {
    if (y < 0)
      j["labels"].push_back(nullptr);
    else
      j["labels"].push_back(y);
  }
  if (g.splits) {
    j["splits"] = {{"train", g.splits->train}, {"val", g.splits->val}, {"test", g.splits->test}};
  }

  std::ofstream out(path);
  if (!out) throw DataError("graph file " + path + ": cannot open for writing");
  out << j.dump() << '\n';
}

}  // namespace normprop
