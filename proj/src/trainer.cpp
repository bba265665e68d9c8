#include "normprop/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "json.hpp"

namespace normprop {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void check(bool ok, const std::string& message) {
  if (!ok) throw DataError("config: " + message);
}

ordered_json config_to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["graph_path"] = cfg.graph_path;
  j["prototype_path"] = cfg.prototype_path;
  j["proto_seed"] = cfg.proto_seed;
  j["proto_iters"] = cfg.proto_iters;
  j["proto_lr"] = cfg.proto_lr;
  j["k"] = cfg.hyper.k;
  j["hidden"] = cfg.hyper.hidden;
  j["embed_dim"] = cfg.hyper.embed_dim;
  j["dropout"] = cfg.hyper.dropout;
  j["lambda"] = cfg.loss.lambda;
  j["tau"] = cfg.loss.tau;
  j["warmup_epochs"] = cfg.loss.warmup_epochs;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["split_mode"] = cfg.split_mode;
  j["shots_per_class"] = cfg.split.shots_per_class;
  j["val_per_class"] = cfg.split.val_per_class;
  j["split_seed"] = cfg.split.seed;
  j["timing"] = cfg.timing;
  j["save_best"] = cfg.save_best_path;
  return j;
}

double as_double(const ordered_json& v, const std::string& key, const std::string& context) {
  if (!v.is_number()) throw DataError(context + ": key '" + key + "' must be a number");
  return v.get<double>();
}

std::int64_t as_int(const ordered_json& v, const std::string& key, const std::string& context) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw DataError(context + ": key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t as_seed(const ordered_json& v, const std::string& key, const std::string& context) {
  if (v.is_number_integer() && v.get<std::int64_t>() < 0)
    throw DataError(context + ": key '" + key + "' must be nonnegative");
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw DataError(context + ": key '" + key + "' must be an integer");
  return v.get<std::uint64_t>();
}

std::string as_string(const ordered_json& v, const std::string& key, const std::string& context) {
  if (!v.is_string()) throw DataError(context + ": key '" + key + "' must be a string");
  return v.get<std::string>();
}

bool as_bool(const ordered_json& v, const std::string& key, const std::string& context) {
  if (!v.is_boolean()) throw DataError(context + ": key '" + key + "' must be a boolean");
  return v.get<bool>();
}

TrainConfig config_from_json(const ordered_json& j, const std::string& context) {
  if (!j.is_object()) throw DataError(context + ": the config must be a JSON object");
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "graph_path") cfg.graph_path = as_string(value, key, context);
    else if (key == "prototype_path") cfg.prototype_path = as_string(value, key, context);
    else if (key == "proto_seed") cfg.proto_seed = as_seed(value, key, context);
    else if (key == "proto_iters") cfg.proto_iters = as_int(value, key, context);
    else if (key == "proto_lr") cfg.proto_lr = as_double(value, key, context);
    else if (key == "k") cfg.hyper.k = as_int(value, key, context);
    else if (key == "hidden") cfg.hyper.hidden = as_int(value, key, context);
    else if (key == "embed_dim") cfg.hyper.embed_dim = as_int(value, key, context);
    else if (key == "dropout") cfg.hyper.dropout = as_double(value, key, context);
    else if (key == "lambda") cfg.loss.lambda = as_double(value, key, context);
    else if (key == "tau") cfg.loss.tau = as_double(value, key, context);
    else if (key == "warmup_epochs") cfg.loss.warmup_epochs = as_int(value, key, context);
    else if (key == "lr") cfg.lr = as_double(value, key, context);
    else if (key == "weight_decay") cfg.weight_decay = as_double(value, key, context);
    else if (key == "epochs") cfg.epochs = as_int(value, key, context);
    else if (key == "seed") cfg.seed = as_seed(value, key, context);
    else if (key == "split_mode") cfg.split_mode = as_string(value, key, context);
    else if (key == "shots_per_class") cfg.split.shots_per_class = as_int(value, key, context);
    else if (key == "val_per_class") cfg.split.val_per_class = as_int(value, key, context);
    else if (key == "split_seed") cfg.split.seed = as_seed(value, key, context);
    else if (key == "timing") cfg.timing = as_bool(value, key, context);
    else if (key == "save_best") cfg.save_best_path = as_string(value, key, context);
    else throw DataError(context + ": unknown key '" + key + "'");
  }
  return cfg;
}

double mask_accuracy(const Prediction& pred, const Graph& g,
                     const std::vector<std::int64_t>& mask) {
  if (mask.empty()) throw DataError("evaluate: the mask is empty");
  std::int64_t correct = 0;
  for (std::int64_t i : mask) {
    if (i < 0 || i >= g.num_nodes)
      throw std::invalid_argument("evaluate: node " + std::to_string(i) + " is out of range");
    if (pred.labels[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(i)])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

/// Dropout-off accuracy with a prebuilt propagation operator.
double accuracy_on(const ModelParams& params, const Graph& g, const SparseMatrix& p,
                   const PrototypeSet& protos, const Hyper& hyper,
                   const std::vector<std::int64_t>& mask) {
  Rng rng(0);  // inference consumes no randomness
  const ForwardCache cache = forward(params, g, p, hyper, rng, /*training=*/false);
  return mask_accuracy(predict(cache.zk, protos), g, mask);
}

std::int64_t experiment_threads() {
  const char* env = std::getenv("NORMPROP_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  std::int64_t value = 0;
  const char* end = env + std::string_view(env).size();
  const auto res = std::from_chars(env, end, value);
  if (res.ec != std::errc{} || res.ptr != end || value < 1)
    throw std::invalid_argument(std::string("NORMPROP_THREADS must be a positive integer, got '") +
                                env + "'");
  return value;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  check(cfg.epochs >= 1, "epochs must be at least 1");
  check(std::isfinite(cfg.lr) && cfg.lr > 0.0, "lr must be positive");
  check(std::isfinite(cfg.weight_decay) && cfg.weight_decay >= 0.0,
        "weight_decay must be nonnegative");
  check(cfg.hyper.k >= 0, "k must be nonnegative");
  check(cfg.hyper.hidden >= 1, "hidden must be at least 1");
  check(cfg.hyper.embed_dim >= 2, "embed_dim must be at least 2");
  check(cfg.hyper.dropout >= 0.0 && cfg.hyper.dropout < 1.0, "dropout must lie in [0, 1)");
  check(cfg.loss.lambda >= 0.0 && cfg.loss.lambda <= 2.0, "lambda must lie in [0, 2]");
  check(cfg.loss.tau >= 0.0 && cfg.loss.tau <= 1.0, "tau must lie in [0, 1]");
  check(cfg.loss.warmup_epochs >= 0, "warmup_epochs must be nonnegative");
  check(cfg.split_mode == "sample" || cfg.split_mode == "from-file",
        "split_mode must be 'sample' or 'from-file', got '" + cfg.split_mode + "'");
  check(cfg.split.shots_per_class >= 1, "shots_per_class must be at least 1");
  check(cfg.split.val_per_class >= 0, "val_per_class must be nonnegative");
  check(cfg.proto_iters >= 1, "proto_iters must be at least 1");
  check(std::isfinite(cfg.proto_lr) && cfg.proto_lr > 0.0, "proto_lr must be positive");
}

TrainConfig load_train_config(const std::string& path) {
  const std::string context = "config file " + path;
  std::ifstream in(path);
  if (!in) throw DataError(context + ": cannot open for reading");

  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw DataError(context + ": " + e.what());
  }
  return config_from_json(j, context);
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("config file " + path + ": cannot open for writing");
  out << config_to_json(cfg).dump(2) << '\n';
}

std::string config_hash(const TrainConfig& cfg) {
  const std::string canonical = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64-bit offset basis
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i) {
    hex[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return hex;
}

double evaluate(const ModelParams& params, const Graph& g, const PrototypeSet& protos,
                const Hyper& hyper, const std::vector<std::int64_t>& mask) {
  const SparseMatrix p = renormalized_adjacency(g);
  return accuracy_on(params, g, p, protos, hyper, mask);
}

PrototypeSet resolve_prototypes(const Graph& g, const TrainConfig& cfg) {
  PrototypeSet protos;
  if (!cfg.prototype_path.empty()) {
    protos = load_prototypes(cfg.prototype_path);
  } else {
    Rng rng(cfg.proto_seed);
    protos = solve_prototypes(g.num_classes, cfg.hyper.embed_dim, cfg.proto_iters, cfg.proto_lr,
                              rng);
  }
  if (protos.num_classes != g.num_classes)
    throw DataError("prototypes cover " + std::to_string(protos.num_classes) +
                    " classes but the graph has " + std::to_string(g.num_classes));
  if (protos.dim != cfg.hyper.embed_dim)
    throw DataError("prototypes live in dimension " + std::to_string(protos.dim) +
                    " but embed_dim is " + std::to_string(cfg.hyper.embed_dim));
  return protos;
}

SplitMasks resolve_split(const Graph& g, const TrainConfig& cfg) {
  if (cfg.split_mode == "from-file") {
    if (!g.splits.has_value())
      throw DataError("split_mode is 'from-file' but the graph carries no splits");
    return *g.splits;
  }
  return sample_few_shot_split(g, cfg.split);
}

RunResult train(const Graph& g, const PrototypeSet& protos, const SplitMasks& masks,
                const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (masks.train.empty()) throw DataError("train: the train split is empty");
  if (protos.num_classes != g.num_classes)
    throw DataError("train: prototypes cover " + std::to_string(protos.num_classes) +
                    " classes but the graph has " + std::to_string(g.num_classes));
  if (protos.dim != cfg.hyper.embed_dim)
    throw DataError("train: prototypes live in dimension " + std::to_string(protos.dim) +
                    " but embed_dim is " + std::to_string(cfg.hyper.embed_dim));

  const SparseMatrix p = renormalized_adjacency(g);
  const std::vector<double> bound = propagation_upper_bound(p, cfg.hyper.k);

  Rng rng(cfg.seed);
  ModelParams params = init_params(cfg.hyper, g.num_features, rng);
  AdamState st_w1(params.w1.data.size(), cfg.lr);
  AdamState st_b1(params.b1.size(), cfg.lr);
  AdamState st_w2(params.w2.data.size(), cfg.lr);
  AdamState st_b2(params.b2.size(), cfg.lr);

  RunResult out;
  out.rows.reserve(static_cast<std::size_t>(cfg.epochs));
  double best_val = -1.0;
  std::int64_t best_epoch = -1;
  ModelParams best_params;
  const double shrink = 1.0 - cfg.lr * cfg.weight_decay;
  const bool all_labeled =
      std::none_of(g.labels.begin(), g.labels.end(), [](std::int64_t y) { return y < 0; });

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();

    const ForwardCache cache = forward(params, g, p, cfg.hyper, rng, /*training=*/true);
    const TotalLoss loss = total_loss(cache.zk, protos, g.labels, masks, bound, cfg.loss, epoch);
    const ParamGrads grads = backward(cache, params, p, loss.grad, cfg.hyper);

    if (cfg.weight_decay > 0.0) {  // decoupled decay on the weight matrices only
      for (double& w : params.w1.data) w *= shrink;
      for (double& w : params.w2.data) w *= shrink;
    }
    adam_step(params.w1.data, grads.w1.data, st_w1);
    adam_step(params.b1, grads.b1, st_b1);
    adam_step(params.w2.data, grads.w2.data, st_w2);
    adam_step(params.b2, grads.b2, st_b2);

    // One dropout-off pass over the updated parameters serves both the
    // validation score and the logged diagnostics: the global-bias column
    // describes the model's representations, not a dropout sample of them.
    Rng eval_rng(0);
    const ForwardCache eval_cache = forward(params, g, p, cfg.hyper, eval_rng, /*training=*/false);

    double val_acc = kNaN;
    if (!masks.val.empty()) {
      val_acc = mask_accuracy(predict(eval_cache.zk, protos), g, masks.val);
      if (val_acc > best_val) {  // ties keep the earlier epoch
        best_val = val_acc;
        best_epoch = epoch;
        best_params = params;
      }
    }

    MetricRow row;
    row.epoch = epoch;
    row.loss_total = loss.report.total;
    row.loss_cls = loss.report.classification_loss;
    row.loss_reg = loss.report.regularization;
    row.omega_size = loss.report.omega_size;
    row.global_bias = all_labeled ? global_bias(eval_cache.zk, protos, g.labels) : kNaN;
    row.val_acc = val_acc;
    if (cfg.timing)
      row.epoch_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
              .count();
    out.rows.push_back(row);
  }

  if (best_epoch < 0) {  // no validation set: fall back to the final epoch
    best_epoch = cfg.epochs - 1;
    best_params = params;
    out.val_accuracy = kNaN;
  } else {
    out.val_accuracy = best_val;
  }
  out.best_epoch = best_epoch;
  out.test_accuracy =
      masks.test.empty() ? kNaN : accuracy_on(best_params, g, p, protos, cfg.hyper, masks.test);
  if (!cfg.save_best_path.empty()) save_checkpoint(best_params, cfg.hyper, cfg.save_best_path);
  return out;
}

RunResult train_from_config(const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (cfg.graph_path.empty()) throw DataError("config: graph_path is required to train");
  const Graph g = load_graph(cfg.graph_path);
  const PrototypeSet protos = resolve_prototypes(g, cfg);
  return train(g, protos, resolve_split(g, cfg), cfg);
}

ExperimentSummary run_experiment(const Graph& g, const PrototypeSet& protos,
                                 const TrainConfig& cfg, std::int64_t num_runs,
                                 std::uint64_t base_seed) {
  if (num_runs < 1) throw std::invalid_argument("run_experiment: num_runs must be at least 1");
  validate_train_config(cfg);

  ExperimentSummary summary;
  summary.num_runs = num_runs;
  summary.seeds.resize(static_cast<std::size_t>(num_runs));
  summary.results.resize(static_cast<std::size_t>(num_runs));
  for (std::int64_t i = 0; i < num_runs; ++i)
    summary.seeds[static_cast<std::size_t>(i)] = base_seed + static_cast<std::uint64_t>(i);

  auto one_run = [&](std::int64_t i) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = summary.seeds[static_cast<std::size_t>(i)];
    if (cfg.split_mode == "sample") run_cfg.split.seed = run_cfg.seed;
    summary.results[static_cast<std::size_t>(i)] = train(g, protos, resolve_split(g, run_cfg),
                                                         run_cfg);
  };

  const std::int64_t workers = std::min<std::int64_t>(experiment_threads(), num_runs);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < num_runs; ++i) one_run(i);
  } else {
    std::atomic<std::int64_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
      while (!stop.load()) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= num_runs) break;
        try {
          one_run(i);
        } catch (...) {
          std::lock_guard<std::mutex> hold(error_mutex);
          if (!first_error) first_error = std::current_exception();
          stop.store(true);
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::int64_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  double mean = 0.0;
  for (const RunResult& r : summary.results) mean += r.test_accuracy;
  mean /= static_cast<double>(num_runs);
  double variance = 0.0;
  for (const RunResult& r : summary.results) {
    const double d = r.test_accuracy - mean;
    variance += d * d;
  }
  variance /= static_cast<double>(num_runs);
  summary.mean_test_acc = mean;
  summary.ci95 = 1.96 * std::sqrt(variance) / std::sqrt(static_cast<double>(num_runs));

  TrainConfig hashed = cfg;
  hashed.seed = base_seed;
  summary.config_hash = config_hash(hashed);
  return summary;
}

ExperimentSummary run_experiment_from_config(const TrainConfig& cfg, std::int64_t num_runs,
                                             std::uint64_t base_seed) {
  validate_train_config(cfg);
  if (cfg.graph_path.empty()) throw DataError("config: graph_path is required to experiment");
  const Graph g = load_graph(cfg.graph_path);
  const PrototypeSet protos = resolve_prototypes(g, cfg);
  return run_experiment(g, protos, cfg, num_runs, base_seed);
}

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::string out = "epoch,loss_total,loss_cls,loss_reg,omega_size,global_bias,val_acc,epoch_ms\n";
  for (const MetricRow& r : rows) {
    out += std::to_string(r.epoch);
    out += ',';
    out += fmt_double(r.loss_total);
    out += ',';
    out += fmt_double(r.loss_cls);
    out += ',';
    out += fmt_double(r.loss_reg);
    out += ',';
    out += std::to_string(r.omega_size);
    out += ',';
    out += fmt_double(r.global_bias);
    out += ',';
    out += fmt_double(r.val_acc);
    out += ',';
    out += fmt_double(r.epoch_ms);
    out += '\n';
  }
  return out;
}

void save_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("metrics file " + path + ": cannot open for writing");
  out << metrics_to_csv(rows);
}

std::string summary_to_json_string(const ExperimentSummary& summary) {
  ordered_json runs = ordered_json::array();
  for (std::size_t i = 0; i < summary.results.size(); ++i) {
    const RunResult& r = summary.results[i];
    ordered_json entry;
    entry["seed"] = summary.seeds[i];
    entry["best_epoch"] = r.best_epoch;
    entry["val_accuracy"] = r.val_accuracy;
    entry["test_accuracy"] = r.test_accuracy;
    runs.push_back(std::move(entry));
  }
  ordered_json j;
  j["runs"] = std::move(runs);
  j["mean_test_acc"] = summary.mean_test_acc;
  j["ci95"] = summary.ci95;
  j["config_hash"] = summary.config_hash;
  return j.dump(2) + "\n";
}

void save_summary(const ExperimentSummary& summary, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("summary file " + path + ": cannot open for writing");
  out << summary_to_json_string(summary);
}

std::vector<BenchRow> bench_propagation(const std::vector<Graph>& graphs, std::int64_t k,
                                        std::int64_t embed_dim, std::int64_t reps) {
  if (graphs.size() < 2)
    throw std::invalid_argument("bench_propagation: need at least two graphs to form ratios");
  if (k < 0) throw std::invalid_argument("bench_propagation: k must be nonnegative");
  if (embed_dim < 1) throw std::invalid_argument("bench_propagation: embed_dim must be positive");
  if (reps < 1) throw std::invalid_argument("bench_propagation: reps must be at least 1");
  for (const Graph& g : graphs)
    if (g.num_nodes < 1)
      throw std::invalid_argument("bench_propagation: every graph needs at least one node");

  std::vector<BenchRow> rows;
  rows.reserve(graphs.size());
  volatile double sink = 0.0;  // keeps the spmm chain observable
  for (const Graph& g : graphs) {
    const SparseMatrix p = renormalized_adjacency(g);
    Rng rng(0);
    DenseMatrix z(g.num_nodes, embed_dim);
    for (double& v : z.data) v = rng.uniform();

    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t rep = 0; rep < reps; ++rep) {
      DenseMatrix w = z;
      const auto started = std::chrono::steady_clock::now();
      for (std::int64_t step = 0; step < k; ++step) w = spmm(p, w);
      const auto elapsed = std::chrono::steady_clock::now() - started;
      sink = sink + w.data[0];
      best = std::min(best, std::chrono::duration<double, std::milli>(elapsed).count());
    }

    BenchRow row;
    row.num_nodes = g.num_nodes;
    row.num_edges = static_cast<std::int64_t>(g.edges.size());
    row.best_ms = best;
    row.ratio = rows.empty() ? 1.0
                             : (rows.back().best_ms > 0.0 ? best / rows.back().best_ms : 0.0);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace normprop
