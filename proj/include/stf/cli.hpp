#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stf/bench.hpp"
#include "stf/config.hpp"
#include "stf/diagnostics.hpp"
#include "stf/diffusion.hpp"
#include "stf/gpvar.hpp"
#include "stf/io.hpp"
#include "stf/train.hpp"

namespace stf::cli {

namespace fs = std::filesystem;

inline void ensure_out_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
}

// Every command persists the configuration it actually ran with.
inline void write_resolved_config(const RunConfig& cfg, const std::string& command) {
  ensure_out_dir(cfg);
  json j = cfg.to_json();
  j["command"] = command;
  std::ofstream os(fs::path(cfg.out_dir) / "resolved_config.json");
  if (!os) throw DataError("cannot write resolved config in " + cfg.out_dir);
  os << j.dump(2) << "\n";
}

inline std::string dataset_path(const RunConfig& cfg) {
  if (!cfg.dataset.empty()) return cfg.dataset;
  return (fs::path(cfg.out_dir) / "dataset.stfd").string();
}

inline std::string checkpoint_path(const RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) return cfg.checkpoint;
  return (fs::path(cfg.out_dir) / "checkpoint.stfc").string();
}

// ---------------------------------------------------------------------------
// Shared data pipeline

struct Pipeline {
  train::SpatiotemporalSeries raw;    // masked raw series (original units)
  train::SpatiotemporalSeries norm;   // masked + normalized series
  train::NodeStats stats;
  train::SplitBoundaries bounds;
  train::WindowDataset train_ds, val_ds, test_ds;
};

inline Pipeline build_pipeline(train::SpatiotemporalSeries series, const RunConfig& cfg) {
  series.steps_per_day = cfg.steps_per_day;
  series.validate();
  Pipeline p;
  if (cfg.missing_ratio > 0.0) series = train::apply_mask(series, cfg.missing_ratio, cfg.seed);
  p.bounds = train::chronological_split(series.n_steps(), cfg.train_frac, cfg.val_frac);
  auto [norm, stats] = train::zscore_fit_apply(series, p.bounds.train_end);
  p.raw = std::move(series);
  p.norm = std::move(norm);
  p.stats = std::move(stats);
  p.train_ds = train::make_windows(p.norm, cfg.window, cfg.horizon, cfg.stride, 0, p.bounds.train_end);
  p.train_ds.split = train::Split::Train;
  p.val_ds = train::make_windows(p.norm, cfg.window, cfg.horizon, 1, p.bounds.train_end, p.bounds.val_end);
  p.val_ds.split = train::Split::Val;
  p.test_ds = train::make_windows(p.norm, cfg.window, cfg.horizon, 1, p.bounds.val_end, p.norm.n_steps());
  p.test_ds.split = train::Split::Test;
  return p;
}

// ---------------------------------------------------------------------------
// gen-data

inline int cmd_gen_data(const RunConfig& cfg) {
  write_resolved_config(cfg, "gen-data");
  auto graph = graphlab::community_graph(cfg.n_communities, cfg.nodes_per_community, cfg.p_in,
                                         cfg.p_out, cfg.seed);
  auto gen = cfg.gpvar_config();
  auto series = graphlab::gpvar_generate(graph, gen);
  series.steps_per_day = cfg.steps_per_day;

  const std::string path = dataset_path(cfg);
  if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  io::write_dataset(path, series, &graph.edges());
  const std::string hash = io::file_hash(path);

  json meta;
  meta["seed"] = cfg.seed;
  meta["n_nodes"] = graph.n();
  meta["n_edges"] = graph.edges().size();
  meta["steps"] = cfg.steps;
  meta["noise_std"] = cfg.noise_std;
  meta["psi_scale"] = cfg.psi_scale;
  meta["p_lags"] = cfg.p_lags;
  meta["l_order"] = cfg.l_order;
  meta["nonlinearity"] = cfg.nonlinearity;
  meta["shift"] = cfg.shift;
  meta["gain_min"] = cfg.gain_min;
  meta["gain_max"] = cfg.gain_max;
  meta["content_hash"] = hash;
  std::ofstream os(fs::path(cfg.out_dir) / "dataset_meta.json");
  os << meta.dump(2) << "\n";

  if (cfg.csv_mirror) io::write_dataset_csv((fs::path(cfg.out_dir) / "dataset.csv").string(), series);
  std::cout << "wrote " << path << " (" << graph.n() << " nodes, " << cfg.steps
            << " steps), hash " << hash << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

inline void write_history_csv(const std::string& path, const std::vector<train::EpochRecord>& hist) {
  io::CsvWriter csv(path);
  csv.row({"epoch", "train_loss", "val_loss", "seconds"});
  for (const auto& r : hist)
    csv.row({std::to_string(r.epoch), io::num(r.train_loss), io::num(r.val_loss),
             io::num(r.seconds)});
}

inline int cmd_train(const RunConfig& cfg) {
  write_resolved_config(cfg, "train");
  const std::string dpath = dataset_path(cfg);
  if (!fs::exists(dpath)) throw DataError("dataset not found: " + dpath);
  auto file = io::read_dataset(dpath);
  Pipeline p = build_pipeline(std::move(file.series), cfg);

  auto mcfg = cfg.model_config(p.norm.n_nodes());
  model::ScaleStf m(mcfg, cfg.seed);

  train::TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.adam = {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  opts.patience = cfg.patience;
  opts.seed = cfg.seed;
  opts.threads = cfg.resolved_threads();
  opts.log = [](const std::string& s) { std::cout << s << "\n"; };

  auto result = train::train(m, p.norm, p.train_ds, p.val_ds, opts);
  const std::string cpath = checkpoint_path(cfg);
  if (auto dir = fs::path(cpath).parent_path(); !dir.empty()) fs::create_directories(dir);
  io::write_checkpoint(cpath, mcfg, m.params(), cfg.seed);
  write_history_csv((fs::path(cfg.out_dir) / "history.csv").string(), result.history);
  std::cout << "best val loss " << result.best_val << " at epoch " << result.best_epoch
            << "; checkpoint " << cpath << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

inline void print_metrics_row(const std::string& label, const train::MetricsReport& r) {
  std::cout << std::fixed << std::setprecision(4);
  std::cout << label << "  MAE @3 " << r.mae_at(3) << "  @6 " << r.mae_at(6) << "  @12 "
            << r.mae_at(12) << "  Avg. " << r.mae_avg << "\n";
  std::cout << label << " RMSE @3 " << r.rmse_at(3) << "  @6 " << r.rmse_at(6) << "  @12 "
            << r.rmse_at(12) << "  Avg. " << r.rmse_avg << "\n";
  std::cout.unsetf(std::ios::fixed);
}

inline void write_metrics(const RunConfig& cfg, const std::string& split,
                          const train::MetricsReport& r) {
  json j;
  j["split"] = split;
  j["n_eval"] = r.n_eval;
  json mae, rmse;
  for (long h = 1; h <= static_cast<long>(r.mae_per_horizon.size()); ++h) {
    mae[std::to_string(h)] = r.mae_at(h);
    rmse[std::to_string(h)] = r.rmse_at(h);
  }
  j["mae_at"] = mae;
  j["rmse_at"] = rmse;
  j["mae_avg"] = r.mae_avg;
  j["rmse_avg"] = r.rmse_avg;
  std::ofstream os(fs::path(cfg.out_dir) / ("metrics_" + split + ".json"));
  os << j.dump(2) << "\n";

  io::CsvWriter csv((fs::path(cfg.out_dir) / ("metrics_" + split + ".csv")).string());
  csv.row({"split", "horizon", "metric", "value"});
  for (long h = 1; h <= static_cast<long>(r.mae_per_horizon.size()); ++h) {
    csv.row({split, std::to_string(h), "mae", io::num(r.mae_at(h))});
    csv.row({split, std::to_string(h), "rmse", io::num(r.rmse_at(h))});
  }
  csv.row({split, "avg", "mae", io::num(r.mae_avg)});
  csv.row({split, "avg", "rmse", io::num(r.rmse_avg)});
}

inline int cmd_eval(const RunConfig& cfg) {
  write_resolved_config(cfg, "eval");
  const std::string dpath = dataset_path(cfg);
  const std::string cpath = checkpoint_path(cfg);
  if (!fs::exists(dpath)) throw DataError("dataset not found: " + dpath);
  if (!fs::exists(cpath)) throw DataError("checkpoint not found: " + cpath);
  auto file = io::read_dataset(dpath);
  Pipeline p = build_pipeline(std::move(file.series), cfg);
  auto m = io::load_model(io::read_checkpoint(cpath));
  if (m.config().n_nodes != p.norm.n_nodes())
    throw DataError("checkpoint was trained on a different node count");

  const long threads = cfg.resolved_threads();
  train::MetricsReport r;
  if (cfg.noise_std_eval > 0.0) {
    auto noisy = train::add_gaussian_noise(p.raw, cfg.noise_std_eval, cfg.seed + 1);
    auto noisy_norm = train::normalize_with(noisy, p.stats);
    r = train::evaluate(m, p.norm, p.stats, p.test_ds, threads, &noisy_norm);
  } else {
    r = train::evaluate(m, p.norm, p.stats, p.test_ds, threads);
  }
  print_metrics_row("test", r);
  write_metrics(cfg, "test", r);
  return 0;
}

// ---------------------------------------------------------------------------
// bench-scaling

inline int cmd_bench_scaling(const RunConfig& cfg) {
  write_resolved_config(cfg, "bench-scaling");
  io::CsvWriter csv((fs::path(cfg.out_dir) / "scaling.csv").string());
  csv.row({"n_nodes", "mode", "reps", "median_ms", "iqr_ms", "peak_bytes", "params", "status"});
  for (long n : cfg.bench_nodes) {
    for (const auto& mode : cfg.bench_modes) {
      RunConfig point = cfg;
      point.node_embedding = "lrae";
      point.attention_mode = mode;
      auto mcfg = point.model_config(n);
      auto pt = bench::time_forward_backward(mcfg, cfg.bench_batch, cfg.bench_reps, cfg.seed,
                                             cfg.resolved_threads());
      csv.row({std::to_string(n), mode, std::to_string(pt.reps), io::num(pt.median_ms),
               io::num(pt.iqr_ms), std::to_string(pt.peak_bytes),
               std::to_string(pt.param_count), pt.status});
      std::cout << n << " " << mode << ": " << pt.median_ms << " ms (" << pt.status << ")\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// energy-trace

inline int cmd_energy_trace(const RunConfig& cfg) {
  write_resolved_config(cfg, "energy-trace");
  const std::string dpath = dataset_path(cfg);
  const std::string cpath = checkpoint_path(cfg);
  if (!fs::exists(dpath)) throw DataError("dataset not found: " + dpath);
  if (!fs::exists(cpath)) throw DataError("checkpoint not found: " + cpath);
  auto file = io::read_dataset(dpath);
  Pipeline p = build_pipeline(std::move(file.series), cfg);
  auto m = io::load_model(io::read_checkpoint(cpath));

  std::vector<long> entries;
  const long n_entries = std::min<long>(cfg.trace_windows, static_cast<long>(p.test_ds.entries.size()));
  for (long i = 0; i < n_entries; ++i) entries.push_back(i);
  auto trace = train::energy_trace(m, p.norm, p.test_ds, entries);

  io::CsvWriter csv((fs::path(cfg.out_dir) / "energy_trace.csv").string());
  csv.row({"layer", "energy"});
  for (std::size_t l = 0; l < trace.size(); ++l)
    csv.row({std::to_string(l), io::num(trace[l])});
  for (std::size_t l = 0; l < trace.size(); ++l)
    std::cout << "layer " << l << " energy " << trace[l] << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// denoise-demo

inline int cmd_denoise_demo(const RunConfig& cfg) {
  write_resolved_config(cfg, "denoise-demo");
  auto graph = graphlab::community_graph(cfg.n_communities, cfg.nodes_per_community, cfg.p_in,
                                         cfg.p_out, cfg.seed);
  DenseArray lap = graph.laplacian();
  Rng rng(cfg.seed, 53);
  DenseArray x0 = DenseArray::randn({graph.n(), 3}, rng);

  io::CsvWriter csv((fs::path(cfg.out_dir) / "denoise_demo.csv").string());
  csv.row({"beta", "closed_form_grad_norm", "first_order_error", "descent_error"});
  for (double beta : cfg.denoise_betas) {
    DenseArray closed = diffusion::denoise_closed_form(x0, lap, beta);
    DenseArray grad = diffusion::denoise_objective_gradient(closed, x0, lap, beta);
    DenseArray first = diffusion::denoise_first_order(x0, lap, beta);
    DenseArray descent = diffusion::denoise_gradient_descent(x0, lap, beta, 500, cfg.seed);
    double err_first = 0.0, err_gd = 0.0;
    for (long i = 0; i < closed.numel(); ++i) {
      err_first += (first[i] - closed[i]) * (first[i] - closed[i]);
      err_gd += (descent[i] - closed[i]) * (descent[i] - closed[i]);
    }
    csv.row({io::num(beta), io::num(grad.frob_norm()),
             io::num(std::sqrt(err_first)), io::num(std::sqrt(err_gd))});
    std::cout << "beta " << beta << ": grad_norm " << grad.frob_norm() << ", first_order_err "
              << std::sqrt(err_first) << ", descent_err " << std::sqrt(err_gd) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// export-embeddings

inline int cmd_export_embeddings(const RunConfig& cfg) {
  write_resolved_config(cfg, "export-embeddings");
  const std::string cpath = checkpoint_path(cfg);
  if (!fs::exists(cpath)) throw DataError("checkpoint not found: " + cpath);
  auto m = io::load_model(io::read_checkpoint(cpath));
  const auto& mcfg = m.config();

  DenseArray e_n({mcfg.n_nodes, mcfg.d_node});
  switch (mcfg.node_embedding) {
    case model::NodeEmbedding::Lrae:
      e_n = matmul_raw(m.params().value("node.dict"), m.params().value("node.adapter"));
      break;
    case model::NodeEmbedding::Dense:
      e_n = m.params().value("node.dense");
      break;
    case model::NodeEmbedding::Zero:
      break;
  }
  io::CsvWriter csv((fs::path(cfg.out_dir) / "embeddings.csv").string());
  std::vector<std::string> header{"node"};
  for (long d = 0; d < mcfg.d_node; ++d) header.push_back("e" + std::to_string(d));
  csv.row(header);
  for (long i = 0; i < mcfg.n_nodes; ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (long d = 0; d < mcfg.d_node; ++d) row.push_back(io::num(e_n(i, d)));
    csv.row(row);
  }
  std::cout << "wrote embeddings for " << mcfg.n_nodes << " nodes\n";
  return 0;
}

// ---------------------------------------------------------------------------
// grad-check

inline int cmd_grad_check(const RunConfig& cfg) {
  write_resolved_config(cfg, "grad-check");
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto rep = diag::scalestf_grad_check(diag::toy_config(), cfg.seed + s, 5);
    std::cout << "seed " << (cfg.seed + s) << ": max rel error " << rep.max_rel_error << " ("
              << rep.worst_param << ")\n";
    worst = std::max(worst, rep.max_rel_error);
  }
  if (worst >= 1e-4) throw NumericError("gradient check failed: " + std::to_string(worst));
  std::cout << "gradient check passed (worst " << worst << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// entry point

inline int run(int argc, char** argv) {
  CLI::App app{"ScaleSTF: scalable spatiotemporal forecasting on graphs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string mode;
  std::string nodes_list;
  double missing_ratio = -1.0;
  double noise_std = -1.0;
  long long seed = -1;

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--mode", mode, "Attention mode: modulated|full");
  app.add_option("--nodes", nodes_list, "Comma-separated node counts for bench-scaling");
  app.add_option("--missing-ratio", missing_ratio, "Fraction of observations to mask");
  app.add_option("--noise-std", noise_std, "Gaussian noise std injected at evaluation");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* be = app.add_subcommand("bench-scaling", "Forward+backward scaling benchmark");
  auto* en = app.add_subcommand("energy-trace", "Per-layer energy of a checkpoint");
  auto* de = app.add_subcommand("denoise-demo", "Closed-form vs approximate graph denoising");
  auto* ex = app.add_subcommand("export-embeddings", "Dump composed node embeddings");
  auto* gc = app.add_subcommand("grad-check", "Run the gradient battery");
  // Global flags may follow the subcommand name.
  for (auto* sub : {gen, tr, ev, be, en, de, ex, gc}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!mode.empty()) {
      cfg.attention_mode = mode;
      cfg.bench_modes = {mode};
    }
    if (missing_ratio >= 0.0) cfg.missing_ratio = missing_ratio;
    if (noise_std >= 0.0) cfg.noise_std_eval = noise_std;
    if (!nodes_list.empty()) {
      cfg.bench_nodes.clear();
      std::stringstream ss(nodes_list);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
          cfg.bench_nodes.push_back(std::stol(tok));
        } catch (const std::exception&) {
          throw ConfigError("--nodes: cannot parse '" + tok + "'");
        }
      }
      if (cfg.bench_nodes.empty()) throw ConfigError("--nodes parsed to an empty list");
    }

    if (gen->parsed()) return cmd_gen_data(cfg);
    if (tr->parsed()) return cmd_train(cfg);
    if (ev->parsed()) return cmd_eval(cfg);
    if (be->parsed()) return cmd_bench_scaling(cfg);
    if (en->parsed()) return cmd_energy_trace(cfg);
    if (de->parsed()) return cmd_denoise_demo(cfg);
    if (ex->parsed()) return cmd_export_embeddings(cfg);
    if (gc->parsed()) return cmd_grad_check(cfg);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CapacityError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace stf::cli
