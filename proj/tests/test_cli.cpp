#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "stf/cli.hpp"

namespace fs = std::filesystem;
using stf::cli::RunConfig;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("stf_cli_test_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Small end-to-end configuration: 24 nodes, short series.
RunConfig tiny_config(const TempDir& tmp) {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.out_dir = tmp.file("run");
  cfg.dataset = tmp.file("run/dataset.stfd");
  cfg.checkpoint = tmp.file("run/checkpoint.stfc");
  cfg.n_communities = 4;
  cfg.nodes_per_community = 6;
  cfg.steps = 300;
  cfg.d_feature = 16;
  cfg.d_node = 8;
  cfg.rank = 4;
  cfg.n_layers = 1;
  cfg.epochs = 1;
  cfg.patience = 2;
  cfg.threads = 2;
  cfg.bench_nodes = {12, 24};
  cfg.bench_reps = 2;
  cfg.trace_windows = 2;
  return cfg;
}

}  // namespace

TEST_CASE("strict config parsing names the offending key") {
  stf::cli::json j;
  j["seed"] = 1;
  j["windvw"] = 12;  // typo
  try {
    (void)stf::cli::parse_config(j);
    FAIL("expected ConfigError");
  } catch (const stf::ConfigError& e) {
    CHECK(std::string(e.what()).find("windvw") != std::string::npos);
  }
  stf::cli::json bad_type;
  bad_type["seed"] = "not-a-number";
  CHECK_THROWS_AS((void)stf::cli::parse_config(bad_type), stf::ConfigError);
}

TEST_CASE("config round-trips through its JSON form") {
  RunConfig cfg;
  cfg.seed = 42;
  cfg.noise_std = 0.75;
  cfg.psi = {{0.3, 0.1}, {0.05, 0.02}};
  cfg.bench_modes = {"modulated"};
  auto j = cfg.to_json();
  RunConfig back = stf::cli::parse_config(j);
  CHECK(back.seed == 42);
  CHECK(back.noise_std == 0.75);
  CHECK(back.psi.size() == 2);
  CHECK(back.bench_modes.size() == 1);
}

TEST_CASE("gen-data is deterministic, seed-sensitive, and validates steps") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  CHECK(stf::cli::cmd_gen_data(cfg) == 0);
  const std::string h1 = stf::io::file_hash(cfg.dataset);
  CHECK(stf::cli::cmd_gen_data(cfg) == 0);
  CHECK(stf::io::file_hash(cfg.dataset) == h1);

  RunConfig other = cfg;
  other.seed = 12;
  CHECK(stf::cli::cmd_gen_data(other) == 0);
  CHECK(stf::io::file_hash(other.dataset) != h1);

  RunConfig zero = cfg;
  zero.steps = 0;
  CHECK_THROWS_AS((void)stf::cli::cmd_gen_data(zero), stf::ConfigError);

  // Metadata carries the content hash.
  std::ifstream meta(fs::path(cfg.out_dir) / "dataset_meta.json");
  REQUIRE(meta.good());
  stf::cli::json mj;
  meta >> mj;
  CHECK(mj["content_hash"] == stf::io::file_hash(cfg.dataset));
}

TEST_CASE("train then eval writes all artifacts and improves on random init") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  REQUIRE(stf::cli::cmd_gen_data(cfg) == 0);

  // Random-init baseline: checkpoint without training.
  {
    auto file = stf::io::read_dataset(cfg.dataset);
    auto mcfg = cfg.model_config(file.series.n_nodes());
    stf::model::ScaleStf untrained(mcfg, cfg.seed);
    stf::io::write_checkpoint(tmp.file("untrained.stfc"), mcfg, untrained.params(), cfg.seed);
  }
  RunConfig random_cfg = cfg;
  random_cfg.checkpoint = tmp.file("untrained.stfc");
  random_cfg.out_dir = tmp.file("random_run");
  CHECK(stf::cli::cmd_eval(random_cfg) == 0);

  CHECK(stf::cli::cmd_train(cfg) == 0);
  CHECK(fs::exists(cfg.checkpoint));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "history.csv"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "resolved_config.json"));
  CHECK(stf::cli::cmd_eval(cfg) == 0);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "metrics_test.json"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "metrics_test.csv"));

  auto read_mae = [](const std::string& p) {
    std::ifstream is(p);
    stf::cli::json j;
    is >> j;
    return j["mae_avg"].get<double>();
  };
  const double trained = read_mae((fs::path(cfg.out_dir) / "metrics_test.json").string());
  const double random = read_mae((fs::path(random_cfg.out_dir) / "metrics_test.json").string());
  CHECK(trained < random);

  // Evaluating the same checkpoint twice is bitwise idempotent.
  const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics_test.json").string();
  const std::string before = stf::io::file_hash(metrics_path);
  CHECK(stf::cli::cmd_eval(cfg) == 0);
  CHECK(stf::io::file_hash(metrics_path) == before);

  // History CSV round-trips and has the documented columns.
  auto rows = stf::io::read_csv((fs::path(cfg.out_dir) / "history.csv").string());
  REQUIRE(rows.size() >= 2);
  CHECK(rows[0] == std::vector<std::string>{"epoch", "train_loss", "val_loss", "seconds"});
}

TEST_CASE("default-scale generation reproduces its content hash") {
  // Full default geometry: 600 nodes, 30000 steps. Slow-ish but it pins the
  // flagship dataset's determinism end to end, including the file layout.
  TempDir tmp;
  RunConfig cfg;
  cfg.seed = 0;
  cfg.out_dir = tmp.file("gen600");
  cfg.dataset = tmp.file("gen600/dataset.stfd");
  REQUIRE(stf::cli::cmd_gen_data(cfg) == 0);
  auto meta_path = fs::path(cfg.out_dir) / "dataset_meta.json";
  std::ifstream meta(meta_path);
  stf::cli::json mj;
  meta >> mj;
  CHECK(mj["n_nodes"] == 600);
  CHECK(mj["steps"] == 30000);
  const std::string first = mj["content_hash"];
  REQUIRE(stf::cli::cmd_gen_data(cfg) == 0);
  CHECK(stf::io::file_hash(cfg.dataset) == first);
}

TEST_CASE("eval without artifacts raises data errors") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  CHECK_THROWS_AS((void)stf::cli::cmd_eval(cfg), stf::DataError);
  REQUIRE(stf::cli::cmd_gen_data(cfg) == 0);
  CHECK_THROWS_AS((void)stf::cli::cmd_eval(cfg), stf::DataError);
}

TEST_CASE("bench-scaling writes one row per point plus a header") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  cfg.bench_modes = {"modulated", "full"};
  CHECK(stf::cli::cmd_bench_scaling(cfg) == 0);
  auto rows = stf::io::read_csv((fs::path(cfg.out_dir) / "scaling.csv").string());
  REQUIRE(rows.size() == 1 + cfg.bench_nodes.size() * cfg.bench_modes.size());
  CHECK(rows[0][0] == "n_nodes");
  for (std::size_t r = 1; r < rows.size(); ++r) CHECK(rows[r].size() == rows[0].size());
}

TEST_CASE("bench-scaling records a capacity row instead of crashing") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  cfg.bench_nodes = {12};
  cfg.bench_modes = {"full"};
  cfg.full_attention_cap = 8;
  CHECK(stf::cli::cmd_bench_scaling(cfg) == 0);
  auto rows = stf::io::read_csv((fs::path(cfg.out_dir) / "scaling.csv").string());
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].back() == "capacity_error");
}

TEST_CASE("denoise demo: zero beta rows are exactly zero and the gap is quadratic") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  cfg.denoise_betas = {0.0, 0.01, 0.005};
  CHECK(stf::cli::cmd_denoise_demo(cfg) == 0);
  auto rows = stf::io::read_csv((fs::path(cfg.out_dir) / "denoise_demo.csv").string());
  REQUIRE(rows.size() == 4);
  CHECK(std::stod(rows[1][1]) == 0.0);
  CHECK(std::stod(rows[1][2]) == 0.0);
  CHECK(std::stod(rows[1][3]) == 0.0);
  const double gap_b = std::stod(rows[2][2]);
  const double gap_half = std::stod(rows[3][2]);
  const double ratio = gap_b / gap_half;
  CHECK(ratio >= 3.2);
  CHECK(ratio <= 4.8);
}

TEST_CASE("energy trace command emits layer-count-plus-one rows") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  cfg.n_layers = 2;
  REQUIRE(stf::cli::cmd_gen_data(cfg) == 0);
  REQUIRE(stf::cli::cmd_train(cfg) == 0);
  CHECK(stf::cli::cmd_energy_trace(cfg) == 0);
  auto rows = stf::io::read_csv((fs::path(cfg.out_dir) / "energy_trace.csv").string());
  REQUIRE(rows.size() == 1 + static_cast<std::size_t>(cfg.n_layers) + 1);
  CHECK(rows[0][0] == "layer");
}

TEST_CASE("deterministic commands are hash-idempotent on their artifacts") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  cfg.n_layers = 2;
  REQUIRE(stf::cli::cmd_gen_data(cfg) == 0);
  REQUIRE(stf::cli::cmd_train(cfg) == 0);
  auto artifact_hashes = [&]() {
    std::vector<std::string> h;
    REQUIRE(stf::cli::cmd_energy_trace(cfg) == 0);
    REQUIRE(stf::cli::cmd_denoise_demo(cfg) == 0);
    REQUIRE(stf::cli::cmd_export_embeddings(cfg) == 0);
    for (const char* name : {"energy_trace.csv", "denoise_demo.csv", "embeddings.csv"})
      h.push_back(stf::io::file_hash((fs::path(cfg.out_dir) / name).string()));
    return h;
  };
  CHECK(artifact_hashes() == artifact_hashes());
}

TEST_CASE("embedding export matches the composed LRAE") {
  TempDir tmp;
  RunConfig cfg = tiny_config(tmp);
  REQUIRE(stf::cli::cmd_gen_data(cfg) == 0);
  REQUIRE(stf::cli::cmd_train(cfg) == 0);
  CHECK(stf::cli::cmd_export_embeddings(cfg) == 0);
  auto rows = stf::io::read_csv((fs::path(cfg.out_dir) / "embeddings.csv").string());
  REQUIRE(rows.size() == 1 + 24);
  CHECK(rows[0].size() == 1 + static_cast<std::size_t>(cfg.d_node));

  auto m = stf::io::load_model(stf::io::read_checkpoint(cfg.checkpoint));
  auto e_n = stf::matmul_raw(m.params().value("node.dict"), m.params().value("node.adapter"));
  CHECK(std::stod(rows[1][1]) == doctest::Approx(e_n(0, 0)).epsilon(1e-9));
}

#ifdef STF_CLI_PATH
TEST_CASE("binary exit codes follow the documented mapping") {
  TempDir tmp;
  const std::string cli = STF_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
  };
  // Config error: unknown key.
  {
    std::ofstream os(tmp.file("bad.json"));
    os << "{\"not_a_key\": 1}";
  }
  CHECK(run("gen-data --config " + tmp.file("bad.json") + " --out " + tmp.file("o1")) == 2);
  // Data error: missing dataset.
  {
    std::ofstream os(tmp.file("ok.json"));
    os << "{\"dataset\": \"" << tmp.file("nope.stfd") << "\"}";
  }
  CHECK(run("train --config " + tmp.file("ok.json") + " --out " + tmp.file("o2")) == 3);
  // Success path: tiny generation through the real binary.
  {
    std::ofstream os(tmp.file("gen.json"));
    os << "{\"n_communities\": 2, \"nodes_per_community\": 3, \"steps\": 40, \"seed\": 5}";
  }
  CHECK(run("gen-data --config " + tmp.file("gen.json") + " --out " + tmp.file("o3")) == 0);
  CHECK(run("definitely-not-a-command") == 2);
}
#endif
