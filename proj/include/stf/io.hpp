#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stf/errors.hpp"
#include "stf/graph.hpp"
#include "stf/model.hpp"
#include "stf/series.hpp"

namespace stf::io {

// ---------------------------------------------------------------------------
// Little-endian primitives (the on-disk formats are fixed little-endian).

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u32(os, static_cast<std::uint32_t>(bits));
  put_u32(os, static_cast<std::uint32_t>(bits >> 32));
}

inline double get_f64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  const std::uint64_t bits = lo | (hi << 32);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a, 64-bit)

inline std::uint64_t fnv1a(const unsigned char* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open file for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<unsigned char> buf(1 << 16);
  while (is) {
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    h = fnv1a(buf.data(), static_cast<std::size_t>(is.gcount()), h);
  }
  return hash_hex(h);
}

// ---------------------------------------------------------------------------
// Dataset files: magic "STFD", version 1, N, T, d_in, then T*N*d_in f32 in
// (t, n, c) order, then an optional adjacency section (edge count + triples).

struct DatasetFile {
  train::SpatiotemporalSeries series;
  std::vector<graphlab::Edge> edges;  // empty when no adjacency section
};

inline void write_dataset(const std::string& path, const train::SpatiotemporalSeries& s,
                          const std::vector<graphlab::Edge>* edges) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write dataset: " + path);
  os.write("STFD", 4);
  put_u32(os, 1);
  const long n = s.n_nodes(), t = s.n_steps(), d = s.n_channels();
  put_u32(os, static_cast<std::uint32_t>(n));
  put_u32(os, static_cast<std::uint32_t>(t));
  put_u32(os, static_cast<std::uint32_t>(d));
  for (long ti = 0; ti < t; ++ti)
    for (long ni = 0; ni < n; ++ni)
      for (long c = 0; c < d; ++c) put_f32(os, static_cast<float>(s.at(ni, ti, c)));
  if (edges) {
    put_u32(os, static_cast<std::uint32_t>(edges->size()));
    for (const auto& e : *edges) {
      put_u32(os, static_cast<std::uint32_t>(e.i));
      put_u32(os, static_cast<std::uint32_t>(e.j));
      put_f32(os, static_cast<float>(e.w));
    }
  }
  if (!os) throw DataError("failed writing dataset: " + path);
}

inline DatasetFile read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "STFD", 4) != 0) throw DataError("not a dataset file: " + path);
  const std::uint32_t version = get_u32(is);
  if (version != 1) throw DataError("unsupported dataset version " + std::to_string(version));
  const long n = get_u32(is);
  const long t = get_u32(is);
  const long d = get_u32(is);
  DatasetFile out;
  out.series.data = DenseArray({n, t, d});
  for (long ti = 0; ti < t; ++ti)
    for (long ni = 0; ni < n; ++ni)
      for (long c = 0; c < d; ++c) out.series.at(ni, ti, c) = get_f32(is);
  // Optional adjacency section.
  if (is.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t m = get_u32(is);
    out.edges.reserve(m);
    for (std::uint32_t e = 0; e < m; ++e) {
      const long i = get_u32(is);
      const long j = get_u32(is);
      const double w = get_f32(is);
      out.edges.push_back({i, j, w});
    }
  }
  return out;
}

// CSV mirror of the data section, one row per (t, node): t, node, c0, ...
inline void write_dataset_csv(const std::string& path, const train::SpatiotemporalSeries& s) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write csv: " + path);
  os << "t,node";
  for (long c = 0; c < s.n_channels(); ++c) os << ",c" << c;
  os << "\n";
  os << std::setprecision(17);
  for (long t = 0; t < s.n_steps(); ++t)
    for (long i = 0; i < s.n_nodes(); ++i) {
      os << t << "," << i;
      for (long c = 0; c < s.n_channels(); ++c) os << "," << s.at(i, t, c);
      os << "\n";
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "STFC", version, config fields, then named parameter
// arrays (name length, name bytes, ndim, dims, f64 data).

inline void write_checkpoint(const std::string& path, const model::ModelConfig& cfg,
                             const ad::ParameterStore& params, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  os.write("STFC", 4);
  put_u32(os, 1);
  auto put_long = [&](long v) { put_u32(os, static_cast<std::uint32_t>(v)); };
  put_long(cfg.n_nodes);
  put_long(cfg.window);
  put_long(cfg.horizon);
  put_long(cfg.d_in);
  put_long(cfg.d_out);
  put_long(cfg.d_feature);
  put_long(cfg.d_node);
  put_long(cfg.d_tid);
  put_long(cfg.d_diw);
  put_long(cfg.rank);
  put_long(cfg.n_layers);
  put_u32(os, cfg.calendar_enabled ? 1 : 0);
  put_long(cfg.steps_per_day);
  put_u32(os, static_cast<std::uint32_t>(cfg.activation));
  put_u32(os, static_cast<std::uint32_t>(cfg.attention));
  put_u32(os, static_cast<std::uint32_t>(cfg.node_embedding));
  put_u32(os, cfg.modulator_shared ? 1 : 0);
  put_long(cfg.full_attention_cap);
  put_u32(os, static_cast<std::uint32_t>(seed));
  put_u32(os, static_cast<std::uint32_t>(seed >> 32));
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<std::uint32_t>(e.value.ndim()));
    for (long d = 0; d < e.value.ndim(); ++d) put_u32(os, static_cast<std::uint32_t>(e.value.dim(d)));
    for (long i = 0; i < e.value.numel(); ++i) put_f64(os, e.value[i]);
  }
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

struct Checkpoint {
  model::ModelConfig cfg;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, DenseArray>> arrays;
};

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "STFC", 4) != 0) throw DataError("not a checkpoint file: " + path);
  const std::uint32_t version = get_u32(is);
  if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  auto get_long = [&]() { return static_cast<long>(get_u32(is)); };
  ck.cfg.n_nodes = get_long();
  ck.cfg.window = get_long();
  ck.cfg.horizon = get_long();
  ck.cfg.d_in = get_long();
  ck.cfg.d_out = get_long();
  ck.cfg.d_feature = get_long();
  ck.cfg.d_node = get_long();
  ck.cfg.d_tid = get_long();
  ck.cfg.d_diw = get_long();
  ck.cfg.rank = get_long();
  ck.cfg.n_layers = get_long();
  ck.cfg.calendar_enabled = get_u32(is) != 0;
  ck.cfg.steps_per_day = get_long();
  ck.cfg.activation = static_cast<ad::Act>(get_u32(is));
  ck.cfg.attention = static_cast<model::AttentionMode>(get_u32(is));
  ck.cfg.node_embedding = static_cast<model::NodeEmbedding>(get_u32(is));
  ck.cfg.modulator_shared = get_u32(is) != 0;
  ck.cfg.full_attention_cap = get_long();
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  ck.seed = lo | (hi << 32);
  const std::uint32_t count = get_u32(is);
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t ndim = get_u32(is);
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<long>(get_u32(is)));
    DenseArray arr(shape);
    for (long i = 0; i < arr.numel(); ++i) arr[i] = get_f64(is);
    ck.arrays.emplace_back(std::move(name), std::move(arr));
  }
  return ck;
}

// Rebuilds a model from a checkpoint, verifying every array is present with
// the right shape.
inline model::ScaleStf load_model(const Checkpoint& ck) {
  model::ScaleStf m(ck.cfg, ck.seed);
  if (static_cast<long>(ck.arrays.size()) != m.params().size())
    throw DataError("checkpoint parameter count mismatch");
  for (const auto& [name, arr] : ck.arrays) {
    DenseArray& dst = m.params().value(name);
    if (dst.shape() != arr.shape()) throw DataError("checkpoint shape mismatch for " + name);
    dst = arr;
  }
  return m;
}

// ---------------------------------------------------------------------------
// CSV helpers

// Full-precision decimal rendering (std::to_string truncates doubles).
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : os_(path) {
    if (!os_) throw DataError("cannot write csv: " + path);
    os_ << std::setprecision(17);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << csv_quote(cells[i]);
    os_ << "\n";
  }
 private:
  std::ofstream os_;
};

// Minimal RFC-style CSV reader used by tests to confirm round-trips.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open csv: " + path);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  char c;
  while (is.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          cell += '"';
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(cell);
      cell.clear();
    } else if (c == '\n') {
      row.push_back(cell);
      cell.clear();
      rows.push_back(row);
      row.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (!cell.empty() || !row.empty()) {
    row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace stf::io
