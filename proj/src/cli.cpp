#include "normprop/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "normprop/graph.hpp"
#include "normprop/loss.hpp"
#include "normprop/model.hpp"
#include "normprop/prototypes.hpp"
#include "normprop/tensor.hpp"
#include "normprop/trainer.hpp"

namespace normprop {

namespace {

/// Shared --config/--key flags for `train` and `experiment`. Flags override
/// config-file keys; untouched flags leave the file's (or default) value.
struct ConfigFlags {
  std::string config_path;
  TrainConfig flags;
  CLI::App* sub = nullptr;

  void attach(CLI::App* s) {
    sub = s;
    s->add_option("--config", config_path, "JSON config file; flags below override its keys");
    s->add_option("--graph", flags.graph_path, "graph JSON path");
    s->add_option("--prototypes", flags.prototype_path,
                  "prototype JSON path (omit to solve them)");
    s->add_option("--proto-seed", flags.proto_seed, "seed for the prototype solver");
    s->add_option("--proto-iters", flags.proto_iters, "prototype solver iterations");
    s->add_option("--proto-lr", flags.proto_lr, "prototype solver step size");
    s->add_option("--k", flags.hyper.k, "propagation steps");
    s->add_option("--hidden", flags.hyper.hidden, "MLP hidden width");
    s->add_option("--embed-dim", flags.hyper.embed_dim, "embedding dimension d'");
    s->add_option("--dropout", flags.hyper.dropout, "dropout rate in [0, 1)");
    s->add_option("--lambda", flags.loss.lambda, "regularization weight in [0, 2]");
    s->add_option("--tau", flags.loss.tau, "confidence threshold in [0, 1]");
    s->add_option("--warmup", flags.loss.warmup_epochs, "classification-only epochs");
    s->add_option("--lr", flags.lr, "Adam learning rate");
    s->add_option("--weight-decay", flags.weight_decay, "decoupled decay on weight matrices");
    s->add_option("--epochs", flags.epochs, "training epochs");
    s->add_option("--seed", flags.seed, "run seed");
    s->add_option("--split-mode", flags.split_mode, "'sample' or 'from-file'")
        ->check(CLI::IsMember({"sample", "from-file"}));
    s->add_option("--shots", flags.split.shots_per_class, "labeled nodes per class");
    s->add_option("--val-per-class", flags.split.val_per_class, "validation nodes per class");
    s->add_option("--split-seed", flags.split.seed, "seed for split sampling");
    s->add_flag("--timing", flags.timing, "measure epoch_ms (off keeps metrics byte-stable)");
    s->add_option("--save-best", flags.save_best_path, "write the best checkpoint here");
  }

  TrainConfig resolve() const {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
    auto touched = [&](const std::string& name) { return sub->count(name) > 0; };
    if (touched("--graph")) cfg.graph_path = flags.graph_path;
    if (touched("--prototypes")) cfg.prototype_path = flags.prototype_path;
    if (touched("--proto-seed")) cfg.proto_seed = flags.proto_seed;
    if (touched("--proto-iters")) cfg.proto_iters = flags.proto_iters;
    if (touched("--proto-lr")) cfg.proto_lr = flags.proto_lr;
    if (touched("--k")) cfg.hyper.k = flags.hyper.k;
    if (touched("--hidden")) cfg.hyper.hidden = flags.hyper.hidden;
    if (touched("--embed-dim")) cfg.hyper.embed_dim = flags.hyper.embed_dim;
    if (touched("--dropout")) cfg.hyper.dropout = flags.hyper.dropout;
    if (touched("--lambda")) cfg.loss.lambda = flags.loss.lambda;
    if (touched("--tau")) cfg.loss.tau = flags.loss.tau;
    if (touched("--warmup")) cfg.loss.warmup_epochs = flags.loss.warmup_epochs;
    if (touched("--lr")) cfg.lr = flags.lr;
    if (touched("--weight-decay")) cfg.weight_decay = flags.weight_decay;
    if (touched("--epochs")) cfg.epochs = flags.epochs;
    if (touched("--seed")) cfg.seed = flags.seed;
    if (touched("--split-mode")) cfg.split_mode = flags.split_mode;
    if (touched("--shots")) cfg.split.shots_per_class = flags.split.shots_per_class;
    if (touched("--val-per-class")) cfg.split.val_per_class = flags.split.val_per_class;
    if (touched("--split-seed")) cfg.split.seed = flags.split.seed;
    if (touched("--timing")) cfg.timing = flags.timing;
    if (touched("--save-best")) cfg.save_best_path = flags.save_best_path;
    return cfg;
  }
};

ExperimentSummary single_run_summary(const RunResult& result, const TrainConfig& cfg) {
  ExperimentSummary summary;
  summary.num_runs = 1;
  summary.mean_test_acc = result.test_accuracy;
  summary.ci95 = 0.0;
  summary.seeds = {cfg.seed};
  summary.results = {result};
  summary.config_hash = config_hash(cfg);
  return summary;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"NormProp: norm-preserving propagation for few-shot node classification",
               "normprop"};
  app.require_subcommand(1);

  // --- prototypes ---------------------------------------------------------
  auto* proto_cmd = app.add_subcommand("prototypes", "Solve well-separated unit prototypes");
  struct {
    std::int64_t classes = 2;
    std::int64_t dim = 2;
    std::int64_t iters = 500;
    double lr = 0.1;
    std::uint64_t seed = 0;
    std::string out;
  } proto;
  proto_cmd->add_option("--classes", proto.classes, "number of prototypes")->required();
  proto_cmd->add_option("--dim", proto.dim, "embedding dimension")->required();
  proto_cmd->add_option("--iters", proto.iters, "solver iterations");
  proto_cmd->add_option("--lr", proto.lr, "solver step size");
  proto_cmd->add_option("--seed", proto.seed, "solver seed");
  proto_cmd->add_option("--out", proto.out, "output JSON path")->required();
  proto_cmd->callback([&] {
    Rng rng(proto.seed);
    const PrototypeSet ps = solve_prototypes(proto.classes, proto.dim, proto.iters, proto.lr, rng);
    save_prototypes(ps, proto.out);
    std::cout << "wrote " << proto.out << " (classes=" << ps.num_classes << ", dim=" << ps.dim
              << ", min pairwise cosine=" << min_pairwise_cosine(ps) << ")\n";
  });

  // --- gen-sbm -------------------------------------------------------------
  auto* sbm_cmd = app.add_subcommand("gen-sbm", "Generate a stochastic block model graph");
  struct {
    SbmParams params;
    std::uint64_t seed = 0;
    std::string out;
  } sbm;
  sbm_cmd->add_option("--classes", sbm.params.num_classes, "number of blocks");
  sbm_cmd->add_option("--per-class", sbm.params.nodes_per_class, "nodes per block");
  sbm_cmd->add_option("--p-intra", sbm.params.p_intra, "within-block edge probability");
  sbm_cmd->add_option("--p-inter", sbm.params.p_inter, "cross-block edge probability");
  sbm_cmd->add_option("--features", sbm.params.feature_dim, "feature dimension");
  sbm_cmd->add_option("--separation", sbm.params.class_mean_separation, "class mean separation");
  sbm_cmd->add_option("--sigma", sbm.params.noise_sigma, "feature noise scale");
  sbm_cmd->add_option("--seed", sbm.seed, "generator seed");
  sbm_cmd->add_option("--out", sbm.out, "output JSON path")->required();
  sbm_cmd->callback([&] {
    Rng rng(sbm.seed);
    const Graph g = sbm_generate(sbm.params, rng);
    save_graph(g, sbm.out);
    std::cout << "wrote " << sbm.out << " (nodes=" << g.num_nodes << ", edges=" << g.edges.size()
              << ", homophily=" << homophily(g) << ")\n";
  });

  // --- split ---------------------------------------------------------------
  auto* split_cmd = app.add_subcommand("split", "Sample a few-shot split and store it in a graph");
  struct {
    std::string graph;
    SplitSpec spec;
    std::string out;
  } split;
  split_cmd->add_option("--graph", split.graph, "graph JSON path")->required();
  split_cmd->add_option("--shots", split.spec.shots_per_class, "labeled nodes per class");
  split_cmd->add_option("--val", split.spec.val_per_class, "validation nodes per class");
  split_cmd->add_option("--seed", split.spec.seed, "sampling seed");
  split_cmd->add_option("--out", split.out, "output JSON path")->required();
  split_cmd->callback([&] {
    Graph g = load_graph(split.graph);
    g.splits = sample_few_shot_split(g, split.spec);
    save_graph(g, split.out);
    std::cout << "wrote " << split.out << " (train=" << g.splits->train.size()
              << ", val=" << g.splits->val.size() << ", test=" << g.splits->test.size() << ")\n";
  });

  // --- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train once and report the selected model");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);
  std::string train_metrics, train_summary;
  train_cmd->add_option("--metrics", train_metrics, "write per-epoch metrics CSV here");
  train_cmd->add_option("--summary", train_summary, "write a single-run summary JSON here");
  train_cmd->callback([&] {
    const TrainConfig cfg = train_flags.resolve();
    const RunResult result = train_from_config(cfg);
    if (!train_metrics.empty()) save_metrics_csv(result.rows, train_metrics);
    if (!train_summary.empty()) save_summary(single_run_summary(result, cfg), train_summary);
    std::cout << "best epoch " << result.best_epoch << ", val accuracy " << result.val_accuracy
              << ", test accuracy " << result.test_accuracy << "\n";
  });

  // --- eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a stored split");
  struct {
    std::string graph;
    std::string checkpoint;
    std::string prototypes;
    std::string mask = "test";
  } eval_args;
  eval_cmd->add_option("--graph", eval_args.graph, "graph JSON path (must carry splits)")
      ->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint JSON path")->required();
  eval_cmd->add_option("--prototypes", eval_args.prototypes, "prototype JSON path")->required();
  eval_cmd->add_option("--mask", eval_args.mask, "which split to score")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->callback([&] {
    const Graph g = load_graph(eval_args.graph);
    if (!g.splits.has_value())
      throw DataError("graph " + eval_args.graph +
                      " carries no splits; run the split command first");
    const Checkpoint ck = load_checkpoint(eval_args.checkpoint);
    const PrototypeSet protos = load_prototypes(eval_args.prototypes);
    const std::vector<std::int64_t>& mask = eval_args.mask == "train" ? g.splits->train
                                            : eval_args.mask == "val" ? g.splits->val
                                                                      : g.splits->test;
    std::cout << eval_args.mask << " accuracy "
              << evaluate(ck.params, g, protos, ck.hyper, mask) << "\n";
  });

  // --- experiment ----------------------------------------------------------
  auto* exp_cmd = app.add_subcommand("experiment", "Train across seeds and aggregate");
  ConfigFlags exp_flags;
  exp_flags.attach(exp_cmd);
  std::int64_t exp_runs = 10;
  std::uint64_t exp_base_seed = 0;
  std::string exp_summary, exp_metrics_dir;
  exp_cmd->add_option("--runs", exp_runs, "number of seeds")->required();
  exp_cmd->add_option("--base-seed", exp_base_seed, "first seed");
  exp_cmd->add_option("--summary", exp_summary, "write the summary JSON here");
  exp_cmd->add_option("--metrics-dir", exp_metrics_dir, "write per-run metrics CSVs here");
  exp_cmd->callback([&] {
    const TrainConfig cfg = exp_flags.resolve();
    const ExperimentSummary summary = run_experiment_from_config(cfg, exp_runs, exp_base_seed);
    if (!exp_summary.empty()) save_summary(summary, exp_summary);
    if (!exp_metrics_dir.empty()) {
      std::filesystem::create_directories(exp_metrics_dir);
      for (std::size_t i = 0; i < summary.results.size(); ++i) {
        const std::string path = (std::filesystem::path(exp_metrics_dir) /
                                  ("run_" + std::to_string(summary.seeds[i]) + ".csv"))
                                     .string();
        save_metrics_csv(summary.results[i].rows, path);
      }
    }
    std::cout << summary.num_runs << " runs: mean test accuracy " << summary.mean_test_acc
              << " +/- " << summary.ci95 << " (config " << summary.config_hash << ")\n";
  });

  // --- bench ---------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "Time the propagation chain as edges double");
  struct {
    std::int64_t k = 2;
    std::int64_t dim = 16;
    std::int64_t nodes = 2000;
    std::int64_t levels = 3;
    double p = 0.01;
    std::int64_t reps = 3;
    std::uint64_t seed = 0;
  } bench;
  bench_cmd->add_option("--k", bench.k, "propagation steps");
  bench_cmd->add_option("--dim", bench.dim, "embedding width");
  bench_cmd->add_option("--nodes", bench.nodes, "nodes per graph (2 blocks)");
  bench_cmd->add_option("--levels", bench.levels, "graphs; edge probability doubles per level");
  bench_cmd->add_option("--p", bench.p, "starting within-block edge probability");
  bench_cmd->add_option("--reps", bench.reps, "repetitions; best time wins");
  bench_cmd->add_option("--seed", bench.seed, "generator seed");
  bench_cmd->callback([&] {
    std::vector<Graph> graphs;
    graphs.reserve(static_cast<std::size_t>(bench.levels));
    double p = bench.p;
    for (std::int64_t level = 0; level < bench.levels; ++level, p *= 2.0) {
      SbmParams params;
      params.num_classes = 2;
      params.nodes_per_class = bench.nodes / 2;
      params.p_intra = p;
      params.p_inter = p / 10.0;
      params.feature_dim = 4;
      Rng rng(bench.seed + static_cast<std::uint64_t>(level));
      graphs.push_back(sbm_generate(params, rng));
    }
    const std::vector<BenchRow> rows = bench_propagation(graphs, bench.k, bench.dim, bench.reps);
    for (const BenchRow& row : rows)
      std::cout << "nodes=" << row.num_nodes << " edges=" << row.num_edges
                << " time_ms=" << row.best_ms << " ratio=" << row.ratio << "\n";
    const std::vector<BenchRow> doubled =
        bench_propagation(graphs, 2 * bench.k, bench.dim, bench.reps);
    if (rows.back().best_ms > 0.0)
      std::cout << "k-doubling ratio on the largest graph: "
                << doubled.back().best_ms / rows.back().best_ms << "\n";
  });

  // --- dispatch -------------------------------------------------------------
  if (args.empty()) {
    std::cout << app.help();
    return 1;
  }
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("normprop");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace normprop
