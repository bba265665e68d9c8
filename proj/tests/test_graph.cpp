#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "dense_reference.hpp"
#include "normprop/graph.hpp"
#include "normprop/tensor.hpp"

using normprop::DataError;
using normprop::DenseMatrix;
using normprop::Graph;
using normprop::Rng;
using normprop::SbmParams;
using normprop::SparseMatrix;
using normprop::SplitMasks;
using normprop::SplitSpec;

namespace {

// Path 0 - 1 - 2 with simple labels; small enough to renormalize by hand.
Graph path_graph() {
  Graph g;
  g.num_nodes = 3;
  g.num_features = 2;
  g.num_classes = 2;
  g.edges = {{0, 1}, {1, 2}};
  g.features = DenseMatrix(3, 2, 1.0);
  g.labels = {0, 0, 1};
  return g;
}

Graph make_sbm(const SbmParams& params, std::uint64_t seed) {
  Rng rng(seed);
  return normprop::sbm_generate(params, rng);
}

std::string tmp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("renormalized adjacency of a path graph matches hand values") {
  // Degrees with self loops: [2, 3, 2], so the nonzeros are
  //   P[0][0] = 1/2, P[0][1] = 1/sqrt(6), P[1][1] = 1/3, P[2][2] = 1/2.
  SparseMatrix p = normprop::renormalized_adjacency(path_graph());
  REQUIRE(p.rows == 3);
  REQUIRE(p.row_offsets == std::vector<std::int64_t>({0, 2, 5, 7}));
  REQUIRE(p.col_indices == std::vector<std::int64_t>({0, 1, 0, 1, 2, 1, 2}));
  const double s6 = 1.0 / std::sqrt(6.0);
  CHECK(std::abs(p.values[0] - 0.5) < 1e-15);
  CHECK(std::abs(p.values[1] - s6) < 1e-15);
  CHECK(std::abs(p.values[2] - s6) < 1e-15);
  CHECK(std::abs(p.values[3] - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(p.values[4] - s6) < 1e-15);
  CHECK(std::abs(p.values[5] - s6) < 1e-15);
  CHECK(std::abs(p.values[6] - 0.5) < 1e-15);
}

TEST_CASE("renormalized adjacency handles the two smallest graphs") {
  Graph one;
  one.num_nodes = 1;
  one.num_features = 1;
  one.num_classes = 1;
  one.features = DenseMatrix(1, 1, 0.0);
  one.labels = {0};
  SparseMatrix p1 = normprop::renormalized_adjacency(one);
  REQUIRE(p1.nnz() == 1);
  CHECK(p1.values[0] == 1.0);

  Graph two = one;
  two.num_nodes = 2;
  two.features = DenseMatrix(2, 1, 0.0);
  two.labels = {0, 0};
  two.edges = {{0, 1}};
  SparseMatrix p2 = normprop::renormalized_adjacency(two);
  REQUIRE(p2.nnz() == 4);
  for (double v : p2.values) CHECK(std::abs(v - 0.5) < 1e-15);
}

TEST_CASE("renormalized adjacency is symmetric with well-formed CSR rows") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 40;
  Graph g = make_sbm(params, 5);
  SparseMatrix p = normprop::renormalized_adjacency(g);

  REQUIRE(static_cast<std::int64_t>(p.row_offsets.size()) == p.rows + 1);
  for (std::int64_t i = 0; i < p.rows; ++i) {
    CHECK(p.row_offsets[static_cast<std::size_t>(i)] <= p.row_offsets[static_cast<std::size_t>(i) + 1]);
    for (std::int64_t e = p.row_offsets[static_cast<std::size_t>(i)] + 1;
         e < p.row_offsets[static_cast<std::size_t>(i) + 1]; ++e)
      CHECK(p.col_indices[static_cast<std::size_t>(e) - 1] < p.col_indices[static_cast<std::size_t>(e)]);
  }
  for (double v : p.values) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }

  DenseMatrix d = testref::ref_densify(p);
  for (std::int64_t i = 0; i < d.rows; ++i) {
    CHECK(d(i, i) > 0.0);
    for (std::int64_t j = 0; j < d.cols; ++j) CHECK(d(i, j) == d(j, i));
  }
}

TEST_CASE("renormalized adjacency matches the dense formula on a random graph") {
  SbmParams params;
  params.num_classes = 2;
  params.nodes_per_class = 25;
  Graph g = make_sbm(params, 19);

  // Dense oracle: build A + I, then scale by inverse square-root degrees.
  const std::int64_t n = g.num_nodes;
  DenseMatrix a(n, n, 0.0);
  for (std::int64_t i = 0; i < n; ++i) a(i, i) = 1.0;
  for (const auto& [u, v] : g.edges) a(u, v) = a(v, u) = 1.0;
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) deg[static_cast<std::size_t>(i)] += a(i, j);
  DenseMatrix expected(n, n, 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      expected(i, j) = a(i, j) / std::sqrt(deg[static_cast<std::size_t>(i)] *
                                           deg[static_cast<std::size_t>(j)]);

  DenseMatrix got = testref::ref_densify(normprop::renormalized_adjacency(g));
  CHECK(testref::max_abs_diff(got, expected) < 1e-12);
}

TEST_CASE("isolated nodes keep a unit self loop") {
  Graph g;
  g.num_nodes = 3;
  g.num_features = 1;
  g.num_classes = 1;
  g.edges = {{0, 1}};
  g.features = DenseMatrix(3, 1, 0.0);
  g.labels = {0, 0, 0};
  SparseMatrix p = normprop::renormalized_adjacency(g);
  CHECK(p.row_offsets[2] == 4);
  CHECK(p.row_offsets[3] == 5);
  CHECK(p.col_indices[4] == 2);
  CHECK(p.values[4] == 1.0);
}

TEST_CASE("upper bound with zero steps is all ones") {
  SparseMatrix p = normprop::renormalized_adjacency(path_graph());
  std::vector<double> b = normprop::propagation_upper_bound(p, 0);
  REQUIRE(b.size() == 3);
  for (double v : b) CHECK(v == 1.0);
}

TEST_CASE("upper bound after one step matches hand-computed row sums") {
  SparseMatrix p = normprop::renormalized_adjacency(path_graph());
  std::vector<double> b = normprop::propagation_upper_bound(p, 1);
  const double s6 = 1.0 / std::sqrt(6.0);
  CHECK(std::abs(b[0] - (0.5 + s6)) < 1e-15);
  CHECK(std::abs(b[1] - (2.0 * s6 + 1.0 / 3.0)) < 1e-15);
  CHECK(std::abs(b[2] - (0.5 + s6)) < 1e-15);
}

TEST_CASE("upper bound on a two-node edge is all ones") {
  Graph g;
  g.num_nodes = 2;
  g.num_features = 1;
  g.num_classes = 1;
  g.edges = {{0, 1}};
  g.features = DenseMatrix(2, 1, 0.0);
  g.labels = {0, 0};
  SparseMatrix p = normprop::renormalized_adjacency(g);
  std::vector<double> b = normprop::propagation_upper_bound(p, 1);
  CHECK(std::abs(b[0] - 1.0) < 1e-15);
  CHECK(std::abs(b[1] - 1.0) < 1e-15);
}

TEST_CASE("upper bound matches the dense matrix power") {
  SbmParams params;
  params.num_classes = 2;
  params.nodes_per_class = 30;
  Graph g = make_sbm(params, 6);
  SparseMatrix p = normprop::renormalized_adjacency(g);

  DenseMatrix d = testref::ref_densify(p);
  DenseMatrix ones(d.cols, 1, 1.0);
  DenseMatrix acc = ones;
  for (int step = 0; step < 3; ++step) acc = testref::ref_matmul(d, acc);

  std::vector<double> b = normprop::propagation_upper_bound(p, 3);
  CHECK(testref::max_abs_diff(b, acc.data) < 1e-12);
  for (double v : b) CHECK(v > 0.0);
}

TEST_CASE("upper bound on a regular graph stays at one for every depth") {
  // A cycle is 2-regular; with self loops every renormalized row sums to 1,
  // so propagating the ones vector is a fixed point.
  Graph g;
  g.num_nodes = 12;
  g.num_features = 1;
  g.num_classes = 1;
  g.features = DenseMatrix(12, 1, 0.0);
  g.labels.assign(12, 0);
  for (std::int64_t i = 0; i < 11; ++i) g.edges.push_back({i, i + 1});
  g.edges.push_back({0, 11});

  SparseMatrix p = normprop::renormalized_adjacency(g);
  for (std::int64_t k : {1, 2, 5}) {
    std::vector<double> b = normprop::propagation_upper_bound(p, k);
    for (double v : b) CHECK(std::abs(v - 1.0) < 1e-12);
  }
}

TEST_CASE("homophily averages per-node same-label neighbor fractions") {
  Graph g = path_graph();
  // Node ratios: node 0 -> 1/1, node 1 -> 1/2, node 2 -> 0/1; mean = 0.5.
  CHECK(normprop::homophily(g) == 0.5);

  g.labels = {1, 1, 1};
  CHECK(normprop::homophily(g) == 1.0);
}

TEST_CASE("homophily is zero for a purely cross-class bipartite graph") {
  Graph g;
  g.num_nodes = 4;
  g.num_features = 1;
  g.num_classes = 2;
  g.features = DenseMatrix(4, 1, 0.0);
  g.labels = {0, 0, 1, 1};
  g.edges = {{0, 2}, {0, 3}, {1, 2}, {1, 3}};
  CHECK(normprop::homophily(g) == 0.0);
}

TEST_CASE("homophily skips isolated nodes but rejects degenerate inputs") {
  Graph g = path_graph();
  g.num_nodes = 4;  // node 3 is isolated
  g.features = DenseMatrix(4, 2, 1.0);
  g.labels = {0, 0, 1, 1};
  CHECK(normprop::homophily(g) == 0.5);  // isolated node excluded from the mean

  Graph unlabeled = path_graph();
  unlabeled.labels = {0, -1, 1};
  CHECK_THROWS_WITH_AS(normprop::homophily(unlabeled), doctest::Contains("unlabeled"), DataError);

  Graph isolated;
  isolated.num_nodes = 2;
  isolated.num_features = 1;
  isolated.num_classes = 1;
  isolated.features = DenseMatrix(2, 1, 0.0);
  isolated.labels = {0, 0};
  CHECK_THROWS_WITH_AS(normprop::homophily(isolated), doctest::Contains("isolated"), DataError);
}

TEST_CASE("homophily is invariant under node relabeling") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 20;
  Graph g = make_sbm(params, 20);
  const double before = normprop::homophily(g);

  // Reverse the node order: new id = n-1-old.
  Graph h = g;
  const std::int64_t n = g.num_nodes;
  for (std::int64_t i = 0; i < n; ++i) {
    h.labels[static_cast<std::size_t>(n - 1 - i)] = g.labels[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < g.num_features; ++j) h.features(n - 1 - i, j) = g.features(i, j);
  }
  h.edges.clear();
  for (const auto& [u, v] : g.edges) {
    const std::int64_t a = n - 1 - u, b = n - 1 - v;
    h.edges.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(h.edges.begin(), h.edges.end());

  CHECK(std::abs(normprop::homophily(h) - before) < 1e-12);
}

TEST_CASE("sbm generator produces the advertised shapes and block labels") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 20;
  params.feature_dim = 5;
  Graph g = make_sbm(params, 7);
  CHECK(g.num_nodes == 60);
  CHECK(g.num_features == 5);
  CHECK(g.num_classes == 3);
  CHECK(g.features.rows == 60);
  CHECK(g.features.cols == 5);
  CHECK(!g.splits.has_value());
  for (std::int64_t i = 0; i < 60; ++i) CHECK(g.labels[static_cast<std::size_t>(i)] == i / 20);
  CHECK_NOTHROW(normprop::validate_graph(g, "generated"));
}

TEST_CASE("sbm edges are unique and sorted with u below v") {
  SbmParams params;
  params.num_classes = 2;
  params.nodes_per_class = 40;
  Graph g = make_sbm(params, 8);
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    CHECK(g.edges[e].first < g.edges[e].second);
    CHECK(seen.insert(g.edges[e]).second);
    if (e > 0) CHECK(g.edges[e - 1] < g.edges[e]);
  }
}

TEST_CASE("sbm edge counts track the block probabilities") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 100;
  params.p_intra = 0.05;
  params.p_inter = 0.005;
  Graph g = make_sbm(params, 9);

  std::int64_t intra = 0, inter = 0;
  for (const auto& [u, v] : g.edges)
    (g.labels[static_cast<std::size_t>(u)] == g.labels[static_cast<std::size_t>(v)] ? intra : inter) += 1;

  // 14850 intra pairs at 0.05 and 30000 inter pairs at 0.005; the bands below
  // sit past five binomial standard deviations.
  CHECK(std::abs(static_cast<double>(intra) - 742.5) < 150.0);
  CHECK(std::abs(static_cast<double>(inter) - 150.0) < 75.0);

  // This regime is strongly homophilous by construction.
  CHECK(normprop::homophily(g) > 0.7);
}

TEST_CASE("sbm with no cross edges is perfectly homophilous") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 30;
  params.p_intra = 0.2;
  params.p_inter = 0.0;
  Graph g = make_sbm(params, 21);
  CHECK(normprop::homophily(g) == 1.0);
}

TEST_CASE("sbm class means are recoverable from the features") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 200;
  params.feature_dim = 4;
  params.class_mean_separation = 1.25;
  params.noise_sigma = 0.5;
  Graph g = make_sbm(params, 10);

  for (std::int64_t c = 0; c < 3; ++c) {
    std::vector<double> mean(4, 0.0);
    for (std::int64_t i = c * 200; i < (c + 1) * 200; ++i)
      for (std::int64_t j = 0; j < 4; ++j) mean[static_cast<std::size_t>(j)] += g.features(i, j);
    for (double& m : mean) m /= 200.0;
    for (std::int64_t j = 0; j < 4; ++j) {
      const double expected = (j == c) ? 1.25 : 0.0;
      CHECK(std::abs(mean[static_cast<std::size_t>(j)] - expected) < 0.2);
    }
  }
}

TEST_CASE("sbm is deterministic in the seed") {
  SbmParams params;
  params.num_classes = 2;
  params.nodes_per_class = 25;
  Graph a = make_sbm(params, 11);
  Graph b = make_sbm(params, 11);
  Graph c = make_sbm(params, 12);
  CHECK(a.edges == b.edges);
  CHECK(a.features.data == b.features.data);
  CHECK((a.edges != c.edges || a.features.data != c.features.data));
}

TEST_CASE("sbm rejects infeasible parameters") {
  Rng rng(1);
  SbmParams params;
  params.num_classes = 5;
  params.feature_dim = 3;
  CHECK_THROWS_AS(normprop::sbm_generate(params, rng), DataError);
  params.feature_dim = 8;
  params.p_intra = 1.5;
  CHECK_THROWS_AS(normprop::sbm_generate(params, rng), DataError);
  params.p_intra = 0.05;
  params.p_inter = 0.5;  // cross-class denser than within-class is out of contract
  CHECK_THROWS_AS(normprop::sbm_generate(params, rng), DataError);
}

TEST_CASE("few shot split picks the requested counts per class") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 50;
  Graph g = make_sbm(params, 13);
  SplitMasks s = normprop::sample_few_shot_split(g, SplitSpec{3, 10, 99});

  CHECK(s.train.size() == 9);
  CHECK(s.val.size() == 30);
  CHECK(s.test.size() == 150 - 9 - 30);

  std::vector<std::int64_t> train_per_class(3, 0), val_per_class(3, 0);
  for (std::int64_t id : s.train) train_per_class[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(id)])] += 1;
  for (std::int64_t id : s.val) val_per_class[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(id)])] += 1;
  for (std::int64_t c = 0; c < 3; ++c) {
    CHECK(train_per_class[static_cast<std::size_t>(c)] == 3);
    CHECK(val_per_class[static_cast<std::size_t>(c)] == 10);
  }

  std::set<std::int64_t> all;
  for (std::int64_t id : s.train) CHECK(all.insert(id).second);
  for (std::int64_t id : s.val) CHECK(all.insert(id).second);
  for (std::int64_t id : s.test) CHECK(all.insert(id).second);
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  CHECK(std::is_sorted(s.val.begin(), s.val.end()));
  CHECK(std::is_sorted(s.test.begin(), s.test.end()));
}

TEST_CASE("few shot split ignores unlabeled nodes") {
  SbmParams params;
  params.num_classes = 2;
  params.nodes_per_class = 30;
  Graph g = make_sbm(params, 14);
  for (std::int64_t i = 0; i < g.num_nodes; i += 3) g.labels[static_cast<std::size_t>(i)] = -1;

  SplitMasks s = normprop::sample_few_shot_split(g, SplitSpec{2, 4, 100});
  std::set<std::int64_t> covered;
  for (std::int64_t id : s.train) covered.insert(id);
  for (std::int64_t id : s.val) covered.insert(id);
  for (std::int64_t id : s.test) covered.insert(id);
  for (std::int64_t i = 0; i < g.num_nodes; ++i) {
    const bool labeled = g.labels[static_cast<std::size_t>(i)] >= 0;
    CHECK(covered.count(i) == static_cast<std::size_t>(labeled));
  }
}

TEST_CASE("few shot split is deterministic in the seed and varies across seeds") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 40;
  Graph g = make_sbm(params, 15);
  SplitMasks a = normprop::sample_few_shot_split(g, SplitSpec{3, 5, 7});
  SplitMasks b = normprop::sample_few_shot_split(g, SplitSpec{3, 5, 7});
  SplitMasks c = normprop::sample_few_shot_split(g, SplitSpec{3, 5, 8});
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.train != c.train);
}

TEST_CASE("few shot split errors when a class is too small") {
  SbmParams params;
  params.num_classes = 2;
  params.nodes_per_class = 5;
  Graph g = make_sbm(params, 16);
  CHECK_THROWS_WITH_AS(normprop::sample_few_shot_split(g, SplitSpec{4, 2, 1}),
                       doctest::Contains("class 0"), DataError);
}

TEST_CASE("graph json round trip is bit exact") {
  SbmParams params;
  params.num_classes = 3;
  params.nodes_per_class = 15;
  params.feature_dim = 4;
  Graph g = make_sbm(params, 17);
  g.labels[2] = -1;
  g.splits = normprop::sample_few_shot_split(g, SplitSpec{2, 3, 5});

  const std::string path = tmp_file("normprop_graph_roundtrip.json");
  normprop::save_graph(g, path);
  Graph back = normprop::load_graph(path);

  CHECK(back.num_nodes == g.num_nodes);
  CHECK(back.num_features == g.num_features);
  CHECK(back.num_classes == g.num_classes);
  CHECK(back.edges == g.edges);
  CHECK(back.features.data == g.features.data);  // bit-exact float round trip
  CHECK(back.labels == g.labels);
  REQUIRE(back.splits.has_value());
  CHECK(back.splits->train == g.splits->train);
  CHECK(back.splits->val == g.splits->val);
  CHECK(back.splits->test == g.splits->test);

  const std::string path2 = tmp_file("normprop_graph_roundtrip2.json");
  normprop::save_graph(back, path2);
  CHECK(slurp(path) == slurp(path2));
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("a minimal one-node file loads") {
  const std::string path = tmp_file("normprop_graph_tiny.json");
  std::ofstream(path)
      << R"({"num_nodes":1,"num_features":1,"num_classes":1,"edges":[],"features":[[0.25]],"labels":[0]})";
  Graph g = normprop::load_graph(path);
  CHECK(g.num_nodes == 1);
  CHECK(g.features(0, 0) == 0.25);
  std::filesystem::remove(path);
}

TEST_CASE("labels serialize as null for unlabeled nodes") {
  Graph g = path_graph();
  g.labels = {0, -1, 1};
  const std::string path = tmp_file("normprop_graph_null.json");
  normprop::save_graph(g, path);
  CHECK(slurp(path).find("null") != std::string::npos);
  Graph back = normprop::load_graph(path);
  CHECK(back.labels == std::vector<std::int64_t>({0, -1, 1}));
  std::filesystem::remove(path);
}

TEST_CASE("load rejects malformed graph files with pointed diagnostics") {
  auto write_and_expect = [&](const std::string& body, const std::string& needle) {
    const std::string path = tmp_file("normprop_graph_bad.json");
    std::ofstream(path) << body;
    CHECK_THROWS_WITH_AS(normprop::load_graph(path), doctest::Contains(needle.c_str()), DataError);
    std::filesystem::remove(path);
  };

  write_and_expect("{ not json", "parse");
  write_and_expect(R"({"num_features":1,"num_classes":1,"edges":[],"features":[[0.0]],"labels":[0]})",
                   "num_nodes");
  write_and_expect(
      R"({"num_nodes":2,"num_features":1,"num_classes":1,"edges":[[1,1]],"features":[[0.0],[0.0]],"labels":[0,0]})",
      "u < v");
  write_and_expect(
      R"({"num_nodes":2,"num_features":1,"num_classes":1,"edges":[[0,1],[0,1]],"features":[[0.0],[0.0]],"labels":[0,0]})",
      "more than once");
  write_and_expect(
      R"({"num_nodes":2,"num_features":1,"num_classes":1,"edges":[[0,5]],"features":[[0.0],[0.0]],"labels":[0,0]})",
      "outside");
  write_and_expect(
      R"({"num_nodes":2,"num_features":1,"num_classes":3,"edges":[],"features":[[0.0],[0.0]],"labels":[0,7]})",
      "label");
  write_and_expect(
      R"({"num_nodes":2,"num_features":2,"num_classes":1,"edges":[],"features":[[0.0],[0.0]],"labels":[0,0]})",
      "features row");
  write_and_expect(
      R"({"num_nodes":2,"num_features":1,"num_classes":1,"edges":[],"features":[[0.0],[0.0]],"labels":[0,0],"splits":{"train":[0,0]}})",
      "repeats");
  write_and_expect(
      R"({"num_nodes":2,"num_features":1,"num_classes":1,"edges":[],"features":[[0.0],[0.0]],"labels":[0,null],"splits":{"train":[1]}})",
      "no label");

  CHECK_THROWS_WITH_AS(normprop::load_graph(tmp_file("normprop_missing_file.json")),
                       doctest::Contains("cannot open"), DataError);
}
