// Python bindings for the normprop engine.
//
// The module mirrors the C++ API at the operation level: graphs, splits,
// prototypes, the propagation operator, the loss/diagnostic kernels, and the
// trainer. Matrices cross the boundary as NumPy float64 arrays (copied, never
// aliased); index lists cross as plain Python lists. Long-running calls
// (prototype solving, training, experiments) release the GIL.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "normprop/graph.hpp"
#include "normprop/loss.hpp"
#include "normprop/prototypes.hpp"
#include "normprop/tensor.hpp"
#include "normprop/trainer.hpp"

namespace py = pybind11;

namespace {

using normprop::DenseMatrix;
using normprop::Graph;
using normprop::PrototypeSet;
using normprop::SparseMatrix;

using CArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix dense_from_numpy(const CArray& arr, const char* what) {
  if (arr.ndim() != 2) throw py::value_error(std::string(what) + " must be a 2-d float array");
  DenseMatrix m(arr.shape(0), arr.shape(1));
  std::memcpy(m.data.data(), arr.data(), sizeof(double) * m.data.size());
  return m;
}

py::array_t<double> dense_to_numpy(const DenseMatrix& m) {
  py::array_t<double> out({static_cast<py::ssize_t>(m.rows), static_cast<py::ssize_t>(m.cols)});
  std::memcpy(out.mutable_data(), m.data.data(), sizeof(double) * m.data.size());
  return out;
}

py::array_t<double> vec_to_numpy(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::memcpy(out.mutable_data(), v.data(), sizeof(double) * v.size());
  return out;
}

py::array_t<std::int64_t> ivec_to_numpy(const std::vector<std::int64_t>& v) {
  py::array_t<std::int64_t> out(static_cast<py::ssize_t>(v.size()));
  std::memcpy(out.mutable_data(), v.data(), sizeof(std::int64_t) * v.size());
  return out;
}

PrototypeSet protos_from_numpy(const CArray& arr) {
  PrototypeSet p;
  p.rows = dense_from_numpy(arr, "prototypes");
  p.num_classes = p.rows.rows;
  p.dim = p.rows.cols;
  return p;
}

std::vector<std::pair<std::int64_t, std::int64_t>> edges_from_python(const py::iterable& edges) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (py::handle item : edges) {
    auto seq = py::cast<py::sequence>(py::reinterpret_borrow<py::object>(item));
    if (py::len(seq) != 2) throw py::value_error("each edge must be a pair (u, v)");
    out.emplace_back(seq[0].cast<std::int64_t>(), seq[1].cast<std::int64_t>());
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_normprop, m) {
  m.doc() =
      "Core bindings for the normprop engine: hyperspherical node encoding, "
      "norm-bounded K-step propagation, prototype classification, and the "
      "homophilous regularizer, plus data generation and training.";
  m.attr("__version__") = "0.1.0";
  m.attr("NORM_EPS") = normprop::kNormEps;

  py::register_exception<normprop::DataError>(m, "DataError", PyExc_ValueError);

  // ---------------------------------------------------------------- graphs
  py::class_<normprop::SplitMasks>(m, "SplitMasks",
                                   "Node index lists for a train/val/test partition.")
      .def(py::init<>())
      .def(py::init([](std::vector<std::int64_t> train, std::vector<std::int64_t> val,
                       std::vector<std::int64_t> test) {
             normprop::SplitMasks masks;
             masks.train = std::move(train);
             masks.val = std::move(val);
             masks.test = std::move(test);
             return masks;
           }),
           py::arg("train"), py::arg("val"), py::arg("test"))
      .def_readwrite("train", &normprop::SplitMasks::train)
      .def_readwrite("val", &normprop::SplitMasks::val)
      .def_readwrite("test", &normprop::SplitMasks::test)
      .def("__repr__", [](const normprop::SplitMasks& s) {
        return "SplitMasks(train=" + std::to_string(s.train.size()) +
               ", val=" + std::to_string(s.val.size()) +
               ", test=" + std::to_string(s.test.size()) + ")";
      });

  py::class_<Graph>(m, "Graph",
                    "Undirected attributed graph. Edges are stored once as (u, v) with u < v; "
                    "labels of -1 mark unlabeled nodes.")
      .def(py::init([](const CArray& features, const py::iterable& edges,
                       std::vector<std::int64_t> labels, std::int64_t num_classes,
                       std::optional<normprop::SplitMasks> splits) {
             Graph g;
             g.features = dense_from_numpy(features, "features");
             g.num_nodes = g.features.rows;
             g.num_features = g.features.cols;
             g.num_classes = num_classes;
             g.edges = edges_from_python(edges);
             g.labels = std::move(labels);
             g.splits = std::move(splits);
             normprop::validate_graph(g, "Graph()");
             return g;
           }),
           py::arg("features"), py::arg("edges"), py::arg("labels"), py::arg("num_classes"),
           py::arg("splits") = std::nullopt)
      .def_readonly("num_nodes", &Graph::num_nodes)
      .def_readonly("num_features", &Graph::num_features)
      .def_readonly("num_classes", &Graph::num_classes)
      .def_readonly("edges", &Graph::edges)
      .def_readonly("labels", &Graph::labels)
      .def_property_readonly(
          "features", [](const Graph& g) { return dense_to_numpy(g.features); },
          "Node feature matrix as a (num_nodes, num_features) float64 array (copy).")
      .def_property(
          "splits", [](const Graph& g) { return g.splits; },
          [](Graph& g, std::optional<normprop::SplitMasks> s) { g.splits = std::move(s); },
          "Stored train/val/test partition, or None.")
      .def("__repr__", [](const Graph& g) {
        return "Graph(nodes=" + std::to_string(g.num_nodes) +
               ", edges=" + std::to_string(g.edges.size()) +
               ", classes=" + std::to_string(g.num_classes) +
               ", features=" + std::to_string(g.num_features) + ")";
      });

  m.def(
      "sbm_generate",
      [](std::int64_t num_classes, std::int64_t nodes_per_class, double p_intra, double p_inter,
         std::int64_t feature_dim, double class_mean_separation, double noise_sigma,
         std::uint64_t seed) {
        normprop::SbmParams params;
        params.num_classes = num_classes;
        params.nodes_per_class = nodes_per_class;
        params.p_intra = p_intra;
        params.p_inter = p_inter;
        params.feature_dim = feature_dim;
        params.class_mean_separation = class_mean_separation;
        params.noise_sigma = noise_sigma;
        Graph g;
        {
          py::gil_scoped_release release;
          normprop::Rng rng(seed);
          g = normprop::sbm_generate(params, rng);
        }
        return g;
      },
      py::arg("num_classes") = 2, py::arg("nodes_per_class") = 50, py::arg("p_intra") = 0.05,
      py::arg("p_inter") = 0.005, py::arg("feature_dim") = 16,
      py::arg("class_mean_separation") = 1.0, py::arg("noise_sigma") = 1.0, py::arg("seed") = 0,
      "Stochastic block model with Gaussian class-mean features; deterministic per seed.");

  m.def("load_graph", &normprop::load_graph, py::arg("path"),
        "Load and validate a graph from its JSON file.");
  m.def("save_graph", &normprop::save_graph, py::arg("graph"), py::arg("path"),
        "Validate and write a graph to a JSON file.");
  m.def("homophily", &normprop::homophily, py::arg("graph"),
        "Average over non-isolated nodes of the fraction of neighbors sharing the node's label.");
  m.def(
      "sample_split",
      [](const Graph& g, std::int64_t shots_per_class, std::int64_t val_per_class,
         std::uint64_t seed) {
        normprop::SplitSpec spec;
        spec.shots_per_class = shots_per_class;
        spec.val_per_class = val_per_class;
        spec.seed = seed;
        return normprop::sample_few_shot_split(g, spec);
      },
      py::arg("graph"), py::arg("shots_per_class") = 3, py::arg("val_per_class") = 30,
      py::arg("seed") = 0,
      "Per class: shots_per_class train nodes and val_per_class validation nodes by unbiased "
      "shuffle; every other labeled node lands in test. Lists come back sorted.");

  // ----------------------------------------------------------- propagation
  py::class_<SparseMatrix>(m, "SparseMatrix",
                           "CSR matrix; indptr/indices/values match scipy.sparse.csr_matrix.")
      .def_property_readonly(
          "shape", [](const SparseMatrix& p) { return py::make_tuple(p.rows, p.cols); })
      .def_property_readonly("nnz", [](const SparseMatrix& p) { return p.nnz(); })
      .def_property_readonly("indptr",
                             [](const SparseMatrix& p) { return ivec_to_numpy(p.row_offsets); })
      .def_property_readonly("indices",
                             [](const SparseMatrix& p) { return ivec_to_numpy(p.col_indices); })
      .def_property_readonly("values", [](const SparseMatrix& p) { return vec_to_numpy(p.values); })
      .def("__repr__", [](const SparseMatrix& p) {
        return "SparseMatrix(shape=(" + std::to_string(p.rows) + ", " + std::to_string(p.cols) +
               "), nnz=" + std::to_string(p.nnz()) + ")";
      });

  m.def("renormalized_adjacency", &normprop::renormalized_adjacency, py::arg("graph"),
        "Symmetrically renormalized adjacency with self loops, as CSR with sorted columns.");
  m.def(
      "propagation_upper_bound",
      [](const SparseMatrix& p, std::int64_t k) {
        return vec_to_numpy(normprop::propagation_upper_bound(p, k));
      },
      py::arg("p"), py::arg("k"),
      "Per-node norm bound P^k · 1, computed by k successive sparse products.");
  m.def(
      "spmm",
      [](const SparseMatrix& p, const CArray& x) {
        return dense_to_numpy(normprop::spmm(p, dense_from_numpy(x, "x")));
      },
      py::arg("p"), py::arg("x"), "Sparse-dense product P · X.");
  m.def(
      "propagate",
      [](const SparseMatrix& p, const CArray& x, std::int64_t k) {
        if (k < 0) throw py::value_error("propagate: k must be nonnegative");
        DenseMatrix z = dense_from_numpy(x, "x");
        for (std::int64_t step = 0; step < k; ++step) z = normprop::spmm(p, z);
        return dense_to_numpy(z);
      },
      py::arg("p"), py::arg("x"), py::arg("k"),
      "K successive sparse products P^k · X; k = 0 returns X unchanged.");
  m.def(
      "row_l2_normalize",
      [](const CArray& x) {
        const normprop::RowNormalized rn =
            normprop::row_l2_normalize(dense_from_numpy(x, "x"));
        return py::make_tuple(dense_to_numpy(rn.unit), vec_to_numpy(rn.norms));
      },
      py::arg("x"),
      "Row-wise L2 normalization; returns (unit_rows, raw_norms). Rows with norm at or below "
      "NORM_EPS stay zero.");

  // ------------------------------------------------------------ prototypes
  m.def(
      "solve_prototypes",
      [](std::int64_t num_classes, std::int64_t dim, std::int64_t iters, double lr,
         std::uint64_t seed) {
        PrototypeSet p;
        {
          py::gil_scoped_release release;
          normprop::Rng rng(seed);
          p = normprop::solve_prototypes(num_classes, dim, iters, lr, rng);
        }
        return dense_to_numpy(p.rows);
      },
      py::arg("num_classes"), py::arg("dim"), py::arg("iters") = 500, py::arg("lr") = 0.1,
      py::arg("seed") = 0,
      "Projected gradient descent on the separation loss; returns a (num_classes, dim) array of "
      "unit rows. Deterministic per seed.");
  m.def(
      "separation_loss",
      [](const CArray& protos) { return normprop::separation_loss(protos_from_numpy(protos)); },
      py::arg("prototypes"),
      "Mean over rows of the largest cosine to any other row (diagonal shifted to -1).");
  m.def(
      "min_pairwise_cosine",
      [](const CArray& protos) { return normprop::min_pairwise_cosine(protos_from_numpy(protos)); },
      py::arg("prototypes"), "Min over unordered pairs of cos(P_i, P_j).");
  m.def(
      "load_prototypes",
      [](const std::string& path) { return dense_to_numpy(normprop::load_prototypes(path).rows); },
      py::arg("path"), "Load a prototype matrix from its JSON file.");
  m.def(
      "save_prototypes",
      [](const CArray& protos, const std::string& path) {
        normprop::save_prototypes(protos_from_numpy(protos), path);
      },
      py::arg("prototypes"), py::arg("path"), "Write a prototype matrix to a JSON file.");

  // -------------------------------------------------- losses & diagnostics
  m.def(
      "classification_loss",
      [](const CArray& zk, const CArray& protos, const std::vector<std::int64_t>& labels,
         const std::vector<std::int64_t>& train_mask) {
        const normprop::ScalarWithGrad r = normprop::classification_loss(
            dense_from_numpy(zk, "zk"), protos_from_numpy(protos), labels, train_mask);
        return py::make_tuple(r.value, dense_to_numpy(r.grad));
      },
      py::arg("zk"), py::arg("prototypes"), py::arg("labels"), py::arg("train_mask"),
      "Mean over the train mask of (1 - cos(Z^K_i, P_{y_i})); returns (value, grad_zk).");
  m.def(
      "confident_set",
      [](const CArray& zk, const CArray& protos, double tau,
         const std::vector<std::int64_t>& exclude) {
        return normprop::confident_set(dense_from_numpy(zk, "zk"), protos_from_numpy(protos), tau,
                                       exclude);
      },
      py::arg("zk"), py::arg("prototypes"), py::arg("tau"),
      py::arg("exclude") = std::vector<std::int64_t>{},
      "Omega_tau: non-excluded nodes whose best prototype cosine reaches tau, sorted.");
  m.def(
      "consistent_metric",
      [](const CArray& zk, const std::vector<double>& bound) {
        return vec_to_numpy(normprop::consistent_metric(dense_from_numpy(zk, "zk"), bound));
      },
      py::arg("zk"), py::arg("bound"), "zeta_i = ||Z^K_i|| / bound_i.");
  m.def(
      "homophilous_regularization",
      [](const CArray& zk, const std::vector<double>& bound,
         const std::vector<std::int64_t>& omega) {
        const normprop::ScalarWithGrad r =
            normprop::homophilous_regularization(dense_from_numpy(zk, "zk"), bound, omega);
        return py::make_tuple(r.value, dense_to_numpy(r.grad));
      },
      py::arg("zk"), py::arg("bound"), py::arg("omega"),
      "L_h = 1 - mean over omega of zeta; returns (value, grad_zk).");
  m.def(
      "global_bias",
      [](const CArray& zk, const CArray& protos, const std::vector<std::int64_t>& labels) {
        return normprop::global_bias(dense_from_numpy(zk, "zk"), protos_from_numpy(protos), labels);
      },
      py::arg("zk"), py::arg("prototypes"), py::arg("labels"),
      "Mean over every node of (1 - cos(Z^K_i, P_{y_i})); requires all labels.");
  m.def(
      "masked_view_check",
      [](const CArray& z0, const SparseMatrix& p, std::int64_t k,
         const std::vector<std::int64_t>& omega) {
        return vec_to_numpy(
            normprop::masked_view_check(dense_from_numpy(z0, "z0"), p, k, omega));
      },
      py::arg("z0"), py::arg("p"), py::arg("k"), py::arg("omega"),
      "Per-node inner product of Z^0 propagated K steps against its omega-masked copy.");

  // ---------------------------------------------------------- configuration
  py::class_<normprop::Hyper>(m, "Hyper", "Architecture and propagation hyperparameters.")
      .def(py::init<>())
      .def_readwrite("k", &normprop::Hyper::k)
      .def_readwrite("hidden", &normprop::Hyper::hidden)
      .def_readwrite("embed_dim", &normprop::Hyper::embed_dim)
      .def_readwrite("dropout", &normprop::Hyper::dropout);

  py::class_<normprop::LossConfig>(m, "LossConfig",
                                   "Mixing weight, confidence threshold, and warm-up length. "
                                   "The mixing weight is exposed as `lambda_`.")
      .def(py::init<>())
      .def_readwrite("lambda_", &normprop::LossConfig::lambda)
      .def_readwrite("tau", &normprop::LossConfig::tau)
      .def_readwrite("warmup_epochs", &normprop::LossConfig::warmup_epochs);

  py::class_<normprop::SplitSpec>(m, "SplitSpec", "Recipe for sampling a few-shot partition.")
      .def(py::init<>())
      .def_readwrite("shots_per_class", &normprop::SplitSpec::shots_per_class)
      .def_readwrite("val_per_class", &normprop::SplitSpec::val_per_class)
      .def_readwrite("seed", &normprop::SplitSpec::seed);

  py::class_<normprop::TrainConfig>(m, "TrainConfig",
                                    "Everything one training run depends on; serializes to the "
                                    "same flat JSON object the CLI consumes.")
      .def(py::init<>())
      .def_readwrite("graph_path", &normprop::TrainConfig::graph_path)
      .def_readwrite("prototype_path", &normprop::TrainConfig::prototype_path)
      .def_readwrite("proto_seed", &normprop::TrainConfig::proto_seed)
      .def_readwrite("proto_iters", &normprop::TrainConfig::proto_iters)
      .def_readwrite("proto_lr", &normprop::TrainConfig::proto_lr)
      .def_readwrite("hyper", &normprop::TrainConfig::hyper)
      .def_readwrite("loss", &normprop::TrainConfig::loss)
      .def_readwrite("lr", &normprop::TrainConfig::lr)
      .def_readwrite("weight_decay", &normprop::TrainConfig::weight_decay)
      .def_readwrite("epochs", &normprop::TrainConfig::epochs)
      .def_readwrite("seed", &normprop::TrainConfig::seed)
      .def_readwrite("split_mode", &normprop::TrainConfig::split_mode)
      .def_readwrite("split", &normprop::TrainConfig::split)
      .def_readwrite("timing", &normprop::TrainConfig::timing)
      .def_readwrite("save_best_path", &normprop::TrainConfig::save_best_path);

  m.def("validate_train_config", &normprop::validate_train_config, py::arg("config"),
        "Raise DataError when any field is out of range.");
  m.def("load_train_config", &normprop::load_train_config, py::arg("path"));
  m.def("save_train_config", &normprop::save_train_config, py::arg("config"), py::arg("path"));
  m.def("config_hash", &normprop::config_hash, py::arg("config"),
        "FNV-1a over the canonical JSON serialization, as 16 lowercase hex digits.");

  // --------------------------------------------------------------- training
  py::class_<normprop::MetricRow>(m, "MetricRow",
                                  "One metrics line. Loss columns and omega_size describe the "
                                  "epoch's training step; global_bias and val_acc are measured "
                                  "dropout-off on the updated parameters.")
      .def_readonly("epoch", &normprop::MetricRow::epoch)
      .def_readonly("loss_total", &normprop::MetricRow::loss_total)
      .def_readonly("loss_cls", &normprop::MetricRow::loss_cls)
      .def_readonly("loss_reg", &normprop::MetricRow::loss_reg)
      .def_readonly("omega_size", &normprop::MetricRow::omega_size)
      .def_readonly("global_bias", &normprop::MetricRow::global_bias)
      .def_readonly("val_acc", &normprop::MetricRow::val_acc)
      .def_readonly("epoch_ms", &normprop::MetricRow::epoch_ms);

  py::class_<normprop::RunResult>(m, "RunResult",
                                  "Outcome of one training run; accuracies are NaN when the "
                                  "corresponding split is empty.")
      .def_readonly("best_epoch", &normprop::RunResult::best_epoch)
      .def_readonly("val_accuracy", &normprop::RunResult::val_accuracy)
      .def_readonly("test_accuracy", &normprop::RunResult::test_accuracy)
      .def_readonly("rows", &normprop::RunResult::rows);

  py::class_<normprop::ExperimentSummary>(m, "ExperimentSummary",
                                          "Multi-seed aggregate; ci95 = 1.96 * sigma / "
                                          "sqrt(runs).")
      .def_readonly("num_runs", &normprop::ExperimentSummary::num_runs)
      .def_readonly("mean_test_acc", &normprop::ExperimentSummary::mean_test_acc)
      .def_readonly("ci95", &normprop::ExperimentSummary::ci95)
      .def_readonly("seeds", &normprop::ExperimentSummary::seeds)
      .def_readonly("results", &normprop::ExperimentSummary::results)
      .def_readonly("config_hash", &normprop::ExperimentSummary::config_hash);

  m.def(
      "train",
      [](const Graph& g, const CArray& protos, const normprop::SplitMasks& masks,
         const normprop::TrainConfig& cfg) {
        const PrototypeSet p = protos_from_numpy(protos);
        py::gil_scoped_release release;
        return normprop::train(g, p, masks, cfg);
      },
      py::arg("graph"), py::arg("prototypes"), py::arg("masks"), py::arg("config"),
      "Full-batch training; deterministic per (config, seed). The best validation checkpoint "
      "(ties to the earlier epoch) supplies the reported test accuracy.");
  m.def(
      "run_experiment",
      [](const Graph& g, const CArray& protos, const normprop::TrainConfig& cfg,
         std::int64_t num_runs, std::uint64_t base_seed) {
        const PrototypeSet p = protos_from_numpy(protos);
        py::gil_scoped_release release;
        return normprop::run_experiment(g, p, cfg, num_runs, base_seed);
      },
      py::arg("graph"), py::arg("prototypes"), py::arg("config"), py::arg("num_runs"),
      py::arg("base_seed"),
      "Runs train() with seeds base_seed .. base_seed + num_runs - 1 and aggregates in seed "
      "order; NORMPROP_THREADS caps workers without changing the output.");

  m.def(
      "metrics_to_csv",
      [](const std::vector<normprop::MetricRow>& rows) { return normprop::metrics_to_csv(rows); },
      py::arg("rows"),
      "Metrics CSV with shortest round-trip doubles: the bytes are a pure function of the rows.");
  m.def("summary_to_json_string", &normprop::summary_to_json_string, py::arg("summary"),
        "Summary JSON matching the CLI's experiment output.");
}
