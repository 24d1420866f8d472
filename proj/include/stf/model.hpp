#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stf/dense.hpp"
#include "stf/errors.hpp"
#include "stf/linalg.hpp"
#include "stf/params.hpp"
#include "stf/rng.hpp"
#include "stf/tape.hpp"

namespace stf::model {

using ad::Act;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

enum class AttentionMode { Modulated, Full };

inline AttentionMode attention_from_string(const std::string& s) {
  if (s == "modulated") return AttentionMode::Modulated;
  if (s == "full") return AttentionMode::Full;
  throw ConfigError("unknown attention mode '" + s + "'");
}

inline const char* attention_name(AttentionMode m) {
  return m == AttentionMode::Modulated ? "modulated" : "full";
}

enum class NodeEmbedding { Lrae, Dense, Zero };

inline NodeEmbedding node_embedding_from_string(const std::string& s) {
  if (s == "lrae") return NodeEmbedding::Lrae;
  if (s == "dense") return NodeEmbedding::Dense;
  if (s == "zero") return NodeEmbedding::Zero;
  throw ConfigError("unknown node embedding kind '" + s + "'");
}

inline const char* node_embedding_name(NodeEmbedding e) {
  switch (e) {
    case NodeEmbedding::Lrae: return "lrae";
    case NodeEmbedding::Dense: return "dense";
    default: return "zero";
  }
}

struct ModelConfig {
  long n_nodes = 0;
  long window = 12;
  long horizon = 12;
  long d_in = 1;
  long d_out = 1;
  long d_feature = 64;
  long d_node = 32;
  long d_tid = 24;
  long d_diw = 24;
  long rank = 16;
  long n_layers = 3;
  bool calendar_enabled = false;
  long steps_per_day = 288;
  long d_model_override = 0;  // 0 means the residual-compatible default D
  Act activation = Act::Relu;
  AttentionMode attention = AttentionMode::Modulated;
  NodeEmbedding node_embedding = NodeEmbedding::Lrae;
  bool modulator_shared = false;
  long full_attention_cap = 4096;

  long d() const {
    return d_feature + d_node + (calendar_enabled ? d_tid + d_diw : 0);
  }
  long d_model() const { return d(); }

  void validate() const {
    if (n_nodes < 1) throw ConfigError("model: n_nodes must be >= 1");
    for (long v : {window, horizon, d_in, d_out, d_feature, d_node, rank, n_layers})
      if (v < 1) throw ConfigError("model: all dimensions must be >= 1");
    if (calendar_enabled && (d_tid < 1 || d_diw < 1 || steps_per_day < 1))
      throw ConfigError("model: calendar dimensions must be >= 1");
    if (node_embedding == NodeEmbedding::Lrae && rank > std::min(n_nodes, d_node))
      throw ConfigError("model: rank must satisfy r <= min(n_nodes, d_node)");
    if (d_model_override != 0 && d_model_override != d())
      throw ConfigError("model: d_model must equal the concatenated width " + std::to_string(d()) +
                        " so residuals add without projection");
  }
};

// ---------------------------------------------------------------------------
// Parameter registry

struct LayerIds {
  long wq = -1, wv = -1, wk = -1, mod = -1;
  long ln1_g = -1, ln1_b = -1, ln2_g = -1, ln2_b = -1;
  long mlp_w1 = -1, mlp_b1 = -1, mlp_w2 = -1, mlp_b2 = -1;
};

struct ParamIds {
  long w0 = -1, b0 = -1;
  long in_w1 = -1, in_b1 = -1, in_w2 = -1, in_b2 = -1;
  long dict = -1, adapter = -1, dense_emb = -1;
  long cal_tid = -1, cal_diw = -1;
  long shared_mod = -1;
  std::vector<LayerIds> layers;
  long ro_w1 = -1, ro_b1 = -1, ro_w2 = -1, ro_b2 = -1;
};

namespace detail {

inline DenseArray xavier(Shape shape, long fan_in, long fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return DenseArray::rand_uniform(std::move(shape), rng, -bound, bound);
}

inline DenseArray table_init(Shape shape, Rng& rng) {
  return DenseArray::randn(std::move(shape), rng, 0.02);
}

}  // namespace detail

// Registers every learnable array in a fixed order; the same seed always
// produces the same initialization.
inline ParamIds build_parameters(const ModelConfig& cfg, ParameterStore& ps, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed, 3);
  const long D = cfg.d();
  const long Dm = cfg.d_model();
  const long win = cfg.window * cfg.d_in;
  ParamIds ids;

  ids.w0 = ps.add("input.w0", detail::xavier({cfg.d_feature, win}, win, cfg.d_feature, rng));
  ids.b0 = ps.add("input.b0", DenseArray({cfg.d_feature}));
  ids.in_w1 = ps.add("input.mlp.w1", detail::xavier({D, D}, D, D, rng));
  ids.in_b1 = ps.add("input.mlp.b1", DenseArray({D}));
  ids.in_w2 = ps.add("input.mlp.w2", detail::xavier({D, D}, D, D, rng));
  ids.in_b2 = ps.add("input.mlp.b2", DenseArray({D}));

  switch (cfg.node_embedding) {
    case NodeEmbedding::Lrae:
      ids.dict = ps.add("node.dict", detail::table_init({cfg.n_nodes, cfg.rank}, rng));
      ids.adapter = ps.add("node.adapter", detail::table_init({cfg.rank, cfg.d_node}, rng));
      break;
    case NodeEmbedding::Dense:
      ids.dense_emb = ps.add("node.dense", detail::table_init({cfg.n_nodes, cfg.d_node}, rng));
      break;
    case NodeEmbedding::Zero:
      break;
  }

  // Calendar tables are always part of the store; with the calendar disabled
  // they are never touched by the forward pass and keep zero gradients.
  ids.cal_tid = ps.add("cal.tid", detail::table_init({cfg.steps_per_day, cfg.d_tid}, rng));
  ids.cal_diw = ps.add("cal.diw", detail::table_init({7, cfg.d_diw}, rng));

  if (cfg.attention == AttentionMode::Modulated && cfg.modulator_shared)
    ids.shared_mod = ps.add("mod.shared", detail::table_init({cfg.d_node, Dm}, rng));

  for (long l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerIds lid;
    lid.wq = ps.add(p + "wq", detail::xavier({D, Dm}, D, Dm, rng));
    lid.wv = ps.add(p + "wv", detail::xavier({D, Dm}, D, Dm, rng));
    if (cfg.attention == AttentionMode::Modulated) {
      if (!cfg.modulator_shared) lid.mod = ps.add(p + "mod", detail::table_init({cfg.d_node, Dm}, rng));
    } else {
      lid.mod = ps.add(p + "mod", detail::table_init({cfg.d_node, Dm}, rng));
      lid.wk = ps.add(p + "wk", detail::xavier({D, Dm}, D, Dm, rng));
    }
    lid.ln1_g = ps.add(p + "ln1.gamma", DenseArray::full({D}, 1.0));
    lid.ln1_b = ps.add(p + "ln1.beta", DenseArray({D}));
    lid.mlp_w1 = ps.add(p + "mlp.w1", detail::xavier({D, D}, D, D, rng));
    lid.mlp_b1 = ps.add(p + "mlp.b1", DenseArray({D}));
    lid.mlp_w2 = ps.add(p + "mlp.w2", detail::xavier({D, D}, D, D, rng));
    lid.mlp_b2 = ps.add(p + "mlp.b2", DenseArray({D}));
    lid.ln2_g = ps.add(p + "ln2.gamma", DenseArray::full({D}, 1.0));
    lid.ln2_b = ps.add(p + "ln2.beta", DenseArray({D}));
    ids.layers.push_back(lid);
  }

  const long out_dim = cfg.horizon * cfg.d_out;
  ids.ro_w1 = ps.add("readout.w1", detail::xavier({D, D}, D, D, rng));
  ids.ro_b1 = ps.add("readout.b1", DenseArray({D}));
  ids.ro_w2 = ps.add("readout.w2", detail::xavier({out_dim, D}, D, out_dim, rng));
  ids.ro_b2 = ps.add("readout.b2", DenseArray({out_dim}));
  return ids;
}

// ---------------------------------------------------------------------------
// Parameter accounting

struct ParamGroup {
  std::string name;
  long count = 0;
};

struct ParamBreakdown {
  std::vector<ParamGroup> groups;
  long total = 0;
  long embedding_params = 0;       // whichever node-embedding variant is active
  long lrae_params = 0;            // N r + r D_N
  long dense_alternative = 0;      // N D_N

  long group(const std::string& name) const {
    for (const auto& g : groups)
      if (g.name == name) return g.count;
    return 0;
  }
};

inline ParamBreakdown param_count(const ModelConfig& cfg) {
  cfg.validate();
  const long D = cfg.d();
  const long Dm = cfg.d_model();
  const long win = cfg.window * cfg.d_in;
  ParamBreakdown b;
  auto push = [&](const std::string& name, long count) {
    b.groups.push_back({name, count});
    b.total += count;
  };
  push("input", cfg.d_feature * win + cfg.d_feature);
  push("input_mlp", 2 * (D * D + D));
  b.lrae_params = cfg.n_nodes * cfg.rank + cfg.rank * cfg.d_node;
  b.dense_alternative = cfg.n_nodes * cfg.d_node;
  switch (cfg.node_embedding) {
    case NodeEmbedding::Lrae: b.embedding_params = b.lrae_params; break;
    case NodeEmbedding::Dense: b.embedding_params = b.dense_alternative; break;
    case NodeEmbedding::Zero: b.embedding_params = 0; break;
  }
  push("node_embedding", b.embedding_params);
  push("calendar", cfg.steps_per_day * cfg.d_tid + 7 * cfg.d_diw);
  long per_layer = 2 * D * Dm          // wq, wv
                   + 4 * D             // two layer norms
                   + 2 * (D * D + D);  // block mlp
  if (cfg.attention == AttentionMode::Modulated) {
    if (!cfg.modulator_shared) per_layer += cfg.d_node * Dm;
  } else {
    per_layer += cfg.d_node * Dm + D * Dm;  // unused modulator plus wk
  }
  push("blocks", cfg.n_layers * per_layer);
  if (cfg.attention == AttentionMode::Modulated && cfg.modulator_shared)
    push("shared_modulator", cfg.d_node * Dm);
  const long out_dim = cfg.horizon * cfg.d_out;
  push("readout", D * D + D + out_dim * D + out_dim);
  return b;
}

// ---------------------------------------------------------------------------
// Forward pass

// Optional instrumentation captured during a forward pass.
struct ForwardTrace {
  std::vector<DenseArray> layer_outputs;  // H^(0) .. H^(L)
  std::vector<DenseArray> attention;      // materialized N x N matrix per block
  bool materialize = false;
};

class ScaleStf {
 public:
  ScaleStf(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    ids_ = build_parameters(cfg_, params_, seed);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const ParamIds& ids() const { return ids_; }

  struct Binding {
    std::vector<Var> vars;  // aligned with ParameterStore ids
    Var operator[](long id) const { return vars[static_cast<std::size_t>(id)]; }
  };

  Binding bind(Tape& t) const {
    Binding b;
    b.vars.reserve(static_cast<std::size_t>(params_.size()));
    for (long i = 0; i < params_.size(); ++i)
      b.vars.push_back(t.leaf(params_.entry(i).value, true));
    return b;
  }

  // window: N x (W * d_in); returns predictions N x (horizon * d_out).
  Var forward_sample(Tape& t, const Binding& b, const DenseArray& window, long tid, long diw,
                     ForwardTrace* trace = nullptr) const {
    const long n = cfg_.n_nodes;
    if (window.dim(0) != n || window.dim(1) != cfg_.window * cfg_.d_in)
      throw DimensionError("forward: window shape mismatch");
    if (cfg_.calendar_enabled && (tid < 0 || tid >= cfg_.steps_per_day || diw < 0 || diw >= 7))
      throw DataError("forward: calendar index out of range");

    Var x = t.leaf(window, false);
    Var z = t.linear(x, b[ids_.w0], b[ids_.b0]);

    Var e_n = node_embedding(t, b);

    std::vector<Var> parts{z, e_n};
    if (cfg_.calendar_enabled) {
      parts.push_back(t.broadcast_row(b[ids_.cal_tid], tid, n));
      parts.push_back(t.broadcast_row(b[ids_.cal_diw], diw, n));
    }
    Var h = t.concat_cols(parts);

    // Residual two-layer MLP on the concatenated embedding.
    {
      Var m1 = t.activation(t.linear(h, b[ids_.in_w1], b[ids_.in_b1]), cfg_.activation);
      Var m2 = t.activation(t.linear(m1, b[ids_.in_w2], b[ids_.in_b2]), cfg_.activation);
      h = t.add(m2, h);
    }
    if (trace) trace->layer_outputs.push_back(t.value(h));

    for (long l = 0; l < cfg_.n_layers; ++l) {
      const LayerIds& lid = ids_.layers[static_cast<std::size_t>(l)];
      Var attn = (cfg_.attention == AttentionMode::Modulated)
                     ? modulated_attention(t, b, lid, h, e_n, trace)
                     : full_attention(t, b, lid, h, trace);
      h = t.layer_norm(t.add(h, attn), b[lid.ln1_g], b[lid.ln1_b]);
      Var f1 = t.activation(t.linear(h, b[lid.mlp_w1], b[lid.mlp_b1]), cfg_.activation);
      Var f2 = t.linear(f1, b[lid.mlp_w2], b[lid.mlp_b2]);
      h = t.layer_norm(t.add(h, f2), b[lid.ln2_g], b[lid.ln2_b]);
      if (trace) trace->layer_outputs.push_back(t.value(h));
    }

    Var hid = t.activation(t.linear(h, b[ids_.ro_w1], b[ids_.ro_b1]), cfg_.activation);
    return t.linear(hid, b[ids_.ro_w2], b[ids_.ro_b2]);
  }

  // Pure batched inference: batch B x N x W x d_in -> B x N x horizon x d_out.
  DenseArray forward_batch(const DenseArray& batch, const std::vector<long>& tids,
                           const std::vector<long>& diws) const {
    if (batch.ndim() != 4) throw DimensionError("forward_batch: expected B x N x W x d_in");
    const long bsz = batch.dim(0), n = batch.dim(1);
    if (n != cfg_.n_nodes || batch.dim(2) != cfg_.window || batch.dim(3) != cfg_.d_in)
      throw DimensionError("forward_batch: batch shape mismatch");
    DenseArray out({bsz, n, cfg_.horizon, cfg_.d_out});
    const long win = cfg_.window * cfg_.d_in;
    const long per_sample = n * win;
    for (long s = 0; s < bsz; ++s) {
      DenseArray window({n, win});
      std::copy(batch.data() + s * per_sample, batch.data() + (s + 1) * per_sample, window.data());
      Tape t;
      Binding b = bind(t);
      Var pred = forward_sample(t, b, window, tids.empty() ? 0 : tids[static_cast<std::size_t>(s)],
                                diws.empty() ? 0 : diws[static_cast<std::size_t>(s)]);
      const DenseArray& p = t.value(pred);
      std::copy(p.data(), p.data() + p.numel(), out.data() + s * p.numel());
    }
    return out;
  }

 private:
  Var node_embedding(Tape& t, const Binding& b) const {
    switch (cfg_.node_embedding) {
      case NodeEmbedding::Lrae:
        return t.matmul(b[ids_.dict], b[ids_.adapter]);
      case NodeEmbedding::Dense:
        return b[ids_.dense_emb];
      case NodeEmbedding::Zero:
        return t.leaf(DenseArray({cfg_.n_nodes, cfg_.d_node}), false);
    }
    throw ConfigError("model: invalid node embedding");
  }

  Var modulator(const Binding& b, const LayerIds& lid) const {
    return cfg_.modulator_shared ? b[ids_.shared_mod] : b[lid.mod];
  }

  // Two-factor attention: left factor softmax(H Wq M^T / sqrt(Dm)) is N x D_N,
  // right factor softmax(E_N^T) (H Wv) is D_N x Dm. No N x N matrix is formed
  // unless a trace asks for the materialized product.
  Var modulated_attention(Tape& t, const Binding& b, const LayerIds& lid, Var h, Var e_n,
                          ForwardTrace* trace) const {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model()));
    Var q = t.matmul(h, b[lid.wq]);
    Var logits = t.scale(t.matmul(q, t.transpose(modulator(b, lid))), inv_sqrt);
    Var s = t.softmax_rows(logits);
    Var key_mix = t.softmax_rows(t.transpose(e_n));  // D_N x N, rows sum to 1
    Var v = t.matmul(h, b[lid.wv]);
    Var right = t.matmul(key_mix, v);
    if (trace && trace->materialize)
      trace->attention.push_back(matmul_raw(t.value(s), t.value(key_mix)));
    return t.matmul(s, right);
  }

  Var full_attention(Tape& t, const Binding& b, const LayerIds& lid, Var h,
                     ForwardTrace* trace) const {
    if (cfg_.n_nodes > cfg_.full_attention_cap)
      throw CapacityError("full attention needs an " + std::to_string(cfg_.n_nodes) + "x" +
                          std::to_string(cfg_.n_nodes) + " matrix; cap is " +
                          std::to_string(cfg_.full_attention_cap) + " nodes");
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model()));
    Var q = t.matmul(h, b[lid.wq]);
    Var k = t.matmul(h, b[lid.wk]);
    Var logits = t.scale(t.matmul(q, t.transpose(k)), inv_sqrt);
    Var a = t.softmax_rows(logits);
    if (trace && trace->materialize) trace->attention.push_back(t.value(a));
    Var v = t.matmul(h, b[lid.wv]);
    return t.matmul(a, v);
  }

  ModelConfig cfg_;
  ParameterStore params_;
  ParamIds ids_;
};

// ---------------------------------------------------------------------------
// Low-rank attention probe

struct LemmaProbeResult {
  std::vector<double> errors;  // per trial
  double median = 0.0;
  double p90 = 0.0;
};

// ||softmax(Q K^T) E E^T V - softmax(Q K^T) V|| / ||softmax(Q K^T) V|| for one
// draw; defined as 0 when the reference product vanishes (e.g. V = 0).
inline double lowrank_attention_error(const DenseArray& q, const DenseArray& k,
                                      const DenseArray& v, const DenseArray& e) {
  const long n = q.dim(0), d = q.dim(1), r = e.dim(1);
  DenseArray logits({n, n});
  mm_nt(q.data(), k.data(), logits.data(), n, d, n);
  for (long i = 0; i < n; ++i) {
    double mx = logits(i, 0);
    for (long j = 1; j < n; ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (long j = 0; j < n; ++j) {
      logits(i, j) = std::exp(logits(i, j) - mx);
      sum += logits(i, j);
    }
    for (long j = 0; j < n; ++j) logits(i, j) /= sum;
  }
  DenseArray av({n, v.dim(1)});
  mm_nn(logits.data(), v.data(), av.data(), n, n, v.dim(1));
  DenseArray etv({r, v.dim(1)});
  mm_tn(e.data(), v.data(), etv.data(), r, n, v.dim(1));
  DenseArray eetv({n, v.dim(1)});
  mm_nn(e.data(), etv.data(), eetv.data(), n, r, v.dim(1));
  DenseArray approx({n, v.dim(1)});
  mm_nn(logits.data(), eetv.data(), approx.data(), n, n, v.dim(1));
  double num = 0.0, den = 0.0;
  for (long i = 0; i < av.numel(); ++i) {
    const double diff = approx[i] - av[i];
    num += diff * diff;
    den += av[i] * av[i];
  }
  return den == 0.0 ? 0.0 : std::sqrt(num) / std::sqrt(den);
}

// Monte-Carlo probe with Gaussian E (entries N(0, 1/r)); orthonormal columns
// when r == n.
inline LemmaProbeResult lemma1_probe(long n, long r, long trials, std::uint64_t seed,
                                     long d = 16) {
  if (r < 1 || r > n) throw ConfigError("lemma1_probe: need 1 <= r <= n");
  Rng rng(seed, 29);
  LemmaProbeResult res;
  for (long trial = 0; trial < trials; ++trial) {
    DenseArray q = DenseArray::randn({n, d}, rng);
    DenseArray k = DenseArray::randn({n, d}, rng);
    DenseArray v = DenseArray::randn({n, d}, rng);
    DenseArray e = DenseArray::randn({n, r}, rng, 1.0 / std::sqrt(static_cast<double>(r)));
    if (r == n) linalg::orthonormalize_columns(e);
    res.errors.push_back(lowrank_attention_error(q, k, v, e));
  }
  std::vector<double> sorted = res.errors;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  if (m > 0) {
    res.median = (m % 2 == 1) ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    res.p90 = sorted[static_cast<std::size_t>(std::min<double>(static_cast<double>(m) - 1.0,
                                                               std::floor(0.9 * static_cast<double>(m))))];
  }
  return res;
}

}  // namespace stf::model
