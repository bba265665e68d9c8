#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "normprop/graph.hpp"
#include "normprop/loss.hpp"
#include "normprop/model.hpp"
#include "normprop/prototypes.hpp"
#include "normprop/tensor.hpp"

namespace normprop {

/// Everything one training run depends on. Serializes to a flat JSON object
/// (same keys as the field names below); every key can be overridden from the
/// command line.
struct TrainConfig {
  std::string graph_path;
  std::string prototype_path;  // empty: solve prototypes instead of loading
  std::uint64_t proto_seed = 0;
  std::int64_t proto_iters = 500;
  double proto_lr = 0.1;

  Hyper hyper;      // k, hidden, embed_dim, dropout
  LossConfig loss;  // lambda, tau, warmup_epochs

  double lr = 0.01;
  double weight_decay = 5e-4;
  std::int64_t epochs = 300;
  std::uint64_t seed = 0;

  std::string split_mode = "sample";  // "sample" or "from-file"
  SplitSpec split;

  bool timing = false;          // measure epoch_ms (off keeps output byte-stable)
  std::string save_best_path;   // empty: keep the best checkpoint in memory only
};

/// Throws DataError with a pointed message when any field is out of range.
void validate_train_config(const TrainConfig& cfg);

TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);

/// FNV-1a over the canonical JSON serialization, as 16 lowercase hex digits.
std::string config_hash(const TrainConfig& cfg);

/// One metrics line; the CSV columns in order. The loss columns and
/// omega_size describe the epoch's training step (dropout active); the
/// global_bias and val_acc columns are measured dropout-off on the updated
/// parameters, so global_bias tracks the model's representations rather than
/// a dropout sample of them. global_bias is NaN when any node is unlabeled.
struct MetricRow {
  std::int64_t epoch = 0;
  double loss_total = 0.0;
  double loss_cls = 0.0;
  double loss_reg = 0.0;
  std::int64_t omega_size = 0;
  double global_bias = 0.0;
  double val_acc = 0.0;
  double epoch_ms = 0.0;
};

/// Outcome of one training run. Accuracies are NaN when the corresponding
/// split is empty (best_epoch then falls back to the final epoch).
struct RunResult {
  std::int64_t best_epoch = 0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<MetricRow> rows;
};

/// Multi-seed aggregate; ci95 = 1.96 * sigma / sqrt(runs) with the population
/// standard deviation over per-run test accuracies.
struct ExperimentSummary {
  std::int64_t num_runs = 0;
  double mean_test_acc = 0.0;
  double ci95 = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<RunResult> results;
  std::string config_hash;
};

/// Dropout-off forward + predict; accuracy = correct / |mask| over the mask.
double evaluate(const ModelParams& params, const Graph& g, const PrototypeSet& protos,
                const Hyper& hyper, const std::vector<std::int64_t>& mask);

/// Loads prototypes from cfg.prototype_path, or solves them for
/// (g.num_classes, cfg.hyper.embed_dim) seeded with cfg.proto_seed.
PrototypeSet resolve_prototypes(const Graph& g, const TrainConfig& cfg);

/// The graph's stored split ("from-file") or a fresh sample per cfg.split.
SplitMasks resolve_split(const Graph& g, const TrainConfig& cfg);

/// Full-batch training: forward -> total loss -> backward -> decoupled weight
/// decay (weight matrices only) -> Adam. Validation accuracy is measured with
/// dropout off after each epoch's update; the best checkpoint (ties to the
/// earlier epoch) supplies the reported test accuracy. Deterministic per
/// (config, seed).
RunResult train(const Graph& g, const PrototypeSet& protos, const SplitMasks& masks,
                const TrainConfig& cfg);

/// Loads the graph and prototypes named by the config, resolves the split,
/// and trains.
RunResult train_from_config(const TrainConfig& cfg);

/// Runs `train` with seeds base_seed .. base_seed + num_runs - 1 (fresh split
/// per run when split_mode is "sample") and aggregates in seed order.
/// NORMPROP_THREADS caps worker threads (default 1); scheduling never changes
/// the output.
ExperimentSummary run_experiment(const Graph& g, const PrototypeSet& protos,
                                 const TrainConfig& cfg, std::int64_t num_runs,
                                 std::uint64_t base_seed);

ExperimentSummary run_experiment_from_config(const TrainConfig& cfg, std::int64_t num_runs,
                                             std::uint64_t base_seed);

/// Metrics CSV with columns
/// epoch,loss_total,loss_cls,loss_reg,omega_size,global_bias,val_acc,epoch_ms.
/// Doubles use shortest round-trip formatting, so the bytes are a pure
/// function of the rows.
std::string metrics_to_csv(const std::vector<MetricRow>& rows);
void save_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path);

/// Summary JSON: { "runs": [...], "mean_test_acc": .., "ci95": ..,
/// "config_hash": ".." }.
std::string summary_to_json_string(const ExperimentSummary& summary);
void save_summary(const ExperimentSummary& summary, const std::string& path);

/// One propagation timing measurement: best-of-reps wall time for the K-step
/// spmm chain, plus the ratio against the previous row (1 for the first).
struct BenchRow {
  std::int64_t num_nodes = 0;
  std::int64_t num_edges = 0;
  double best_ms = 0.0;
  double ratio = 1.0;
};

/// Times the K-step propagation on each graph in order (at least two).
/// Feature transformation is excluded: only the spmm chain is inside the
/// timed region, so K = 0 measures an empty loop.
std::vector<BenchRow> bench_propagation(const std::vector<Graph>& graphs, std::int64_t k,
                                        std::int64_t embed_dim, std::int64_t reps = 3);

}  // namespace normprop
