#pragma once

#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stf/errors.hpp"
#include "stf/gpvar.hpp"
#include "stf/model.hpp"

namespace stf::cli {

using nlohmann::json;

// Flat run configuration covering generation, model, and training knobs.
// Parsing is strict: an unknown key is a hard error naming the key.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/out";
  std::string dataset;
  std::string checkpoint;

  // graph
  long n_communities = 20;
  long nodes_per_community = 30;
  double p_in = 0.3;
  double p_out = 0.01;

  // generator
  long p_lags = 3;
  long l_order = 2;
  std::vector<std::vector<double>> psi;  // empty -> built-in default table
  double psi_scale = 1.0;
  double noise_std = 0.4;
  std::string nonlinearity = "tanh";
  long steps = 30000;
  long burn_in = 100;
  double gain_min = 0.5;
  double gain_max = 1.5;
  std::string shift = "sym_normalized";
  bool csv_mirror = false;

  // model
  long window = 12;
  long horizon = 12;
  long d_feature = 64;
  long d_node = 32;
  long d_tid = 24;
  long d_diw = 24;
  long rank = 16;
  long n_layers = 3;
  bool calendar_enabled = false;
  long steps_per_day = 288;
  std::string activation = "relu";
  std::string attention_mode = "modulated";
  std::string node_embedding = "lrae";
  bool modulator_shared = false;
  long full_attention_cap = 4096;

  // training / evaluation
  long epochs = 100;
  long batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long patience = 10;
  double train_frac = 0.7;
  double val_frac = 0.1;
  long stride = 1;
  double missing_ratio = 0.0;
  double noise_std_eval = 0.0;
  long threads = 0;  // 0 -> hardware concurrency

  // benchmarks
  std::vector<long> bench_nodes = {600, 1200, 2400};
  std::vector<std::string> bench_modes = {"modulated", "full"};
  long bench_reps = 20;
  long bench_batch = 4;

  // diagnostics
  std::vector<double> denoise_betas = {0.0, 0.025, 0.05, 0.1};
  long trace_windows = 8;

  long resolved_threads() const;
  graphlab::GpvarConfig gpvar_config() const;
  model::ModelConfig model_config(long n_nodes) const;
  graphlab::ShiftKind shift_kind() const;
  json to_json() const;
};

inline long RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  const long hw = static_cast<long>(std::thread::hardware_concurrency());
  return hw > 0 ? hw : 1;
}

inline graphlab::ShiftKind RunConfig::shift_kind() const {
  if (shift == "sym_normalized") return graphlab::ShiftKind::SymNormalized;
  if (shift == "unnormalized_laplacian") return graphlab::ShiftKind::Unnormalized;
  throw ConfigError("unknown shift '" + shift + "'");
}

inline graphlab::GpvarConfig RunConfig::gpvar_config() const {
  graphlab::GpvarConfig g;
  g.p_lags = p_lags;
  g.l_order = l_order;
  if (!psi.empty()) {
    DenseArray table({static_cast<long>(psi.size()), static_cast<long>(psi[0].size())});
    for (std::size_t p = 0; p < psi.size(); ++p) {
      if (psi[p].size() != psi[0].size()) throw ConfigError("psi rows must have equal length");
      for (std::size_t l = 0; l < psi[p].size(); ++l)
        table(static_cast<long>(p), static_cast<long>(l)) = psi[p][l] * psi_scale;
    }
    g.psi = std::move(table);
  } else {
    g.psi = graphlab::default_psi(p_lags, l_order, psi_scale);
  }
  g.noise_std = noise_std;
  g.gain_min = gain_min;
  g.gain_max = gain_max;
  g.nonlinearity = ad::act_from_string(nonlinearity);
  g.steps = steps;
  g.burn_in = burn_in;
  g.seed = seed;
  g.shift_kind = shift_kind();
  return g;
}

inline model::ModelConfig RunConfig::model_config(long n_nodes) const {
  model::ModelConfig m;
  m.n_nodes = n_nodes;
  m.window = window;
  m.horizon = horizon;
  m.d_feature = d_feature;
  m.d_node = d_node;
  m.d_tid = d_tid;
  m.d_diw = d_diw;
  m.rank = rank;
  m.n_layers = n_layers;
  m.calendar_enabled = calendar_enabled;
  m.steps_per_day = steps_per_day;
  m.activation = ad::act_from_string(activation);
  m.attention = model::attention_from_string(attention_mode);
  m.node_embedding = model::node_embedding_from_string(node_embedding);
  m.modulator_shared = modulator_shared;
  m.full_attention_cap = full_attention_cap;
  m.validate();
  return m;
}

namespace detail {

class StrictReader {
 public:
  explicit StrictReader(const json& j) : j_(j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError("unknown config key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  RunConfig c;
  detail::StrictReader r(j);
  r.get("seed", c.seed);
  r.get("out_dir", c.out_dir);
  r.get("dataset", c.dataset);
  r.get("checkpoint", c.checkpoint);
  r.get("n_communities", c.n_communities);
  r.get("nodes_per_community", c.nodes_per_community);
  r.get("p_in", c.p_in);
  r.get("p_out", c.p_out);
  r.get("p_lags", c.p_lags);
  r.get("l_order", c.l_order);
  r.get("psi", c.psi);
  r.get("psi_scale", c.psi_scale);
  r.get("noise_std", c.noise_std);
  r.get("nonlinearity", c.nonlinearity);
  r.get("steps", c.steps);
  r.get("burn_in", c.burn_in);
  r.get("gain_min", c.gain_min);
  r.get("gain_max", c.gain_max);
  r.get("shift", c.shift);
  r.get("csv_mirror", c.csv_mirror);
  r.get("window", c.window);
  r.get("horizon", c.horizon);
  r.get("d_feature", c.d_feature);
  r.get("d_node", c.d_node);
  r.get("d_tid", c.d_tid);
  r.get("d_diw", c.d_diw);
  r.get("rank", c.rank);
  r.get("n_layers", c.n_layers);
  r.get("calendar_enabled", c.calendar_enabled);
  r.get("steps_per_day", c.steps_per_day);
  r.get("activation", c.activation);
  r.get("attention_mode", c.attention_mode);
  r.get("node_embedding", c.node_embedding);
  r.get("modulator_shared", c.modulator_shared);
  r.get("full_attention_cap", c.full_attention_cap);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("patience", c.patience);
  r.get("train_frac", c.train_frac);
  r.get("val_frac", c.val_frac);
  r.get("stride", c.stride);
  r.get("missing_ratio", c.missing_ratio);
  r.get("noise_std_eval", c.noise_std_eval);
  r.get("threads", c.threads);
  r.get("bench_nodes", c.bench_nodes);
  r.get("bench_modes", c.bench_modes);
  r.get("bench_reps", c.bench_reps);
  r.get("bench_batch", c.bench_batch);
  r.get("denoise_betas", c.denoise_betas);
  r.get("trace_windows", c.trace_windows);
  r.finish();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

inline json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["dataset"] = dataset;
  j["checkpoint"] = checkpoint;
  j["n_communities"] = n_communities;
  j["nodes_per_community"] = nodes_per_community;
  j["p_in"] = p_in;
  j["p_out"] = p_out;
  j["p_lags"] = p_lags;
  j["l_order"] = l_order;
  j["psi"] = psi;
  j["psi_scale"] = psi_scale;
  j["noise_std"] = noise_std;
  j["nonlinearity"] = nonlinearity;
  j["steps"] = steps;
  j["burn_in"] = burn_in;
  j["gain_min"] = gain_min;
  j["gain_max"] = gain_max;
  j["shift"] = shift;
  j["csv_mirror"] = csv_mirror;
  j["window"] = window;
  j["horizon"] = horizon;
  j["d_feature"] = d_feature;
  j["d_node"] = d_node;
  j["d_tid"] = d_tid;
  j["d_diw"] = d_diw;
  j["rank"] = rank;
  j["n_layers"] = n_layers;
  j["calendar_enabled"] = calendar_enabled;
  j["steps_per_day"] = steps_per_day;
  j["activation"] = activation;
  j["attention_mode"] = attention_mode;
  j["node_embedding"] = node_embedding;
  j["modulator_shared"] = modulator_shared;
  j["full_attention_cap"] = full_attention_cap;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["adam_eps"] = adam_eps;
  j["patience"] = patience;
  j["train_frac"] = train_frac;
  j["val_frac"] = val_frac;
  j["stride"] = stride;
  j["missing_ratio"] = missing_ratio;
  j["noise_std_eval"] = noise_std_eval;
  j["threads"] = threads;
  j["bench_nodes"] = bench_nodes;
  j["bench_modes"] = bench_modes;
  j["bench_reps"] = bench_reps;
  j["bench_batch"] = bench_batch;
  j["denoise_betas"] = denoise_betas;
  j["trace_windows"] = trace_windows;
  return j;
}

}  // namespace stf::cli
