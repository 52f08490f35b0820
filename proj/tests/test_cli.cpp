#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "commands.hpp"
#include "tseqgan/checkpoint.hpp"
#include "tseqgan/dataio.hpp"
#include "tseqgan/error.hpp"
#include "tseqgan/fsutil.hpp"
#include "tseqgan/runconfig.hpp"
#include "tseqgan/synthdata.hpp"

using namespace tseqgan;
namespace stdfs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  stdfs::path path;
  TempDir() {
    static int counter = 0;
    path = stdfs::temp_directory_path() /
           ("tseqgan_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    stdfs::remove_all(path);
    stdfs::create_directories(path);
  }
  ~TempDir() { stdfs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code;
  std::string out, err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& p) { return fs::read_file(p); }

void write(const std::string& p, const std::string& text) { std::ofstream(p) << text; }

json read_json(const std::string& p) { return json::parse(slurp(p)); }

// Shared small dataset, built once.
const TempDir& data_dir() {
  static TempDir d;
  static bool built = false;
  if (!built) {
    REQUIRE(invoke({"synth", "--n", "200", "--seed", "7", "--out", d.path.string()}).code == 0);
    built = true;
  }
  return d;
}

std::string tiny_config(const TempDir& data, const std::string& out_dir,
                        const std::map<std::string, std::string>& changes = {}) {
  std::map<std::string, std::string> kv{
      {"positive", data / "omega_pos.jsonl"},
      {"negative", data / "omega_neg.jsonl"},
      {"out_dir", out_dir},
      {"seed", "3"},
      {"batch", "8"},
      {"lr_mle", "0.1"},
      {"lr_disc_pretrain", "0.1"},
      {"lr_adv", "0.01"},
      {"pretrain_g_steps", "10"},
      {"pretrain_d_steps", "10"},
      {"adversarial_steps", "12"},
      {"eval_every", "3"},
      {"eval_batch", "16"},
      {"checkpoint_every", "8"},
      {"log_every", "0"},
  };
  for (const auto& [k, v] : changes) kv[k] = v;
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  return text;
}

}  // namespace

TEST_CASE("synth writes both splits with metadata and is reproducible") {
  TempDir a, b;
  REQUIRE(invoke({"synth", "--n", "120", "--seed", "7", "--out", a.path.string()}).code == 0);
  REQUIRE(invoke({"synth", "--n", "120", "--seed", "7", "--out", b.path.string()}).code == 0);
  for (const char* f : {"omega_pos.jsonl", "omega_neg.jsonl", "metadata.json"}) CHECK(slurp(a / f) == slurp(b / f));

  const auto pos = io::read_jsonl(a / "omega_pos.jsonl");
  const auto neg = io::read_jsonl(a / "omega_neg.jsonl");
  REQUIRE(pos.size() == 120);
  REQUIRE(neg.size() == 120);
  for (const auto& s : pos) CHECK(synth::check_rules(s).positive);
  for (const auto& s : neg) CHECK_FALSE(synth::check_rules(s).positive);

  const json meta = read_json(a / "metadata.json");
  CHECK(meta["seed"] == 7);
  CHECK(meta["n"] == 120);
  CHECK(meta["rule_engine"] == synth::kRuleEngineVersion);
  CHECK(meta["files"]["positive"]["fnv1a64"] == fs::file_hash(a / "omega_pos.jsonl"));

  TempDir c;
  REQUIRE(invoke({"synth", "--n", "120", "--seed", "8", "--out", c.path.string()}).code == 0);
  CHECK(slurp(a / "omega_pos.jsonl") != slurp(c / "omega_pos.jsonl"));
}

TEST_CASE("usage errors exit with 1") {
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"bogus"}).code == 1);
  CHECK(invoke({"synth", "--n", "10"}).code == 1);
  CHECK(invoke({"synth", "--n", "0", "--out", "x"}).code == 1);
  CHECK(invoke({"generate", "--checkpoint", "c", "--n", "5", "--out", "o", "--model", "worst"}).code == 1);
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({"train", "--print-defaults"}).code == 0);

  TempDir t;
  write(t / "bad.conf", "batch = 8\nnot_a_key = 1\n");
  auto r = invoke({"train", "--config", t / "bad.conf"});
  CHECK(r.code == 1);
  CHECK(r.err.find("not_a_key") != std::string::npos);

  write(t / "typed.conf", "batch = eight\n");
  r = invoke({"train", "--config", t / "typed.conf"});
  CHECK(r.code == 1);
  CHECK(r.err.find("batch") != std::string::npos);

  CHECK(invoke({"train", "--config", t / "missing.conf"}).code == 1);
  CHECK(invoke({"train", "--set", "batch"}).code == 1);
}

TEST_CASE("config parser") {
  auto kv = config::parse_flat("# comment\nbatch = 8  # trailing\n\nout_dir = \"my run\"\n");
  CHECK(kv.at("batch") == "8");
  CHECK(kv.at("out_dir") == "\"my run\"");
  const auto rc = config::resolve(kv, {}, false);
  CHECK(rc.train.batch == 8);
  CHECK(rc.out_dir == "my run");

  CHECK_THROWS_AS(config::parse_flat("batch 8\n"), ConfigError);
  CHECK_THROWS_AS(config::parse_flat("batch = 8\nbatch = 9\n"), ConfigError);
  CHECK_THROWS_AS(config::resolve({{"lr", "-1"}}, {}, false), ConfigError);
  CHECK_THROWS_AS(config::resolve({{"lr_adv", "fast"}}, {}, false), ConfigError);
  CHECK_THROWS_AS(config::resolve({{"mmd_bandwidth", "-2"}}, {}, false), ConfigError);
  CHECK_THROWS_AS(config::resolve({{"best_metric", "loss"}}, {}, false), ConfigError);

  // Every documented default resolves to the built-in defaults.
  const auto defaults = config::resolve(config::parse_flat(config::defaults_text()), {}, false);
  CHECK(defaults.train.to_json() == train::TrainConfig{}.to_json());
  CHECK(!defaults.metrics.mmd.gamma.has_value());

  // The echoed form parses back to the same configuration.
  config::RunConfig custom = config::resolve({{"lr_adv", "0.003"}, {"mmd_bandwidth", "0.25"}, {"seed", "11"}}, {}, false);
  const auto again = config::resolve(config::parse_flat(custom.to_flat()), {}, false);
  CHECK(again.to_json() == custom.to_json());
}

TEST_CASE("precedence: defaults < file < environment < --set") {
  const std::map<std::string, std::string> file{{"batch", "8"}, {"seed", "4"}, {"eval_batch", "9"}};
  ::setenv("TSEQGAN_SEED", "5", 1);
  ::setenv("TSEQGAN_EVAL_BATCH", "10", 1);
  const auto rc = config::resolve(file, {{"eval_batch", "11"}});
  ::unsetenv("TSEQGAN_SEED");
  ::unsetenv("TSEQGAN_EVAL_BATCH");
  CHECK(rc.train.batch == 8);
  CHECK(rc.train.seed == 5);
  CHECK(rc.train.eval_batch == 11);
  CHECK(rc.train.pretrain_g_steps == 2400);

  ::setenv("TSEQGAN_BATCH", "lots", 1);
  CHECK_THROWS_AS(config::resolve(file), ConfigError);
  ::unsetenv("TSEQGAN_BATCH");
}

TEST_CASE("train reports missing or mislabelled data with exit 2") {
  TempDir t;
  write(t / "c.conf", "positive = " + (t / "nope.jsonl") + "\nnegative = " + (t / "nope.jsonl") + "\n");
  auto r = invoke({"train", "--config", t / "c.conf", "--out", t / "run"});
  CHECK(r.code == 2);
  CHECK(r.err.find("nope.jsonl") != std::string::npos);

  const auto& d = data_dir();
  write(t / "swap.conf", "positive = " + (d / "omega_neg.jsonl") + "\nnegative = " + (d / "omega_pos.jsonl") + "\n");
  r = invoke({"train", "--config", t / "swap.conf", "--out", t / "run"});
  CHECK(r.code == 2);
  CHECK(r.err.find("not positive") != std::string::npos);

  CHECK(invoke({"train", "--out", t / "run"}).code == 1);  // no dataset paths
}

TEST_CASE("train writes checkpoints, history, summary and resolved config") {
  const auto& d = data_dir();
  TempDir t;
  write(t / "run.conf", tiny_config(d, t / "run"));
  const auto r = invoke({"train", "--config", t / "run.conf"});
  REQUIRE_MESSAGE(r.code == 0, r.err);

  for (const char* f : {"g0.ckpt", "g1.ckpt", "pretrained.ckpt", "best.ckpt", "last.ckpt", "BEST", "step_0000008.ckpt",
                        "step_0000016.ckpt", "step_0000024.ckpt", "step_0000032.ckpt"})
    CHECK_MESSAGE(stdfs::exists(t.path / "run" / "checkpoints" / f), f);

  const json summary = read_json(t / "run/summary.json");
  CHECK(summary["stop_reason"] == "completed");
  CHECK(summary["engine"] == train::kEngineVersion);
  CHECK(summary["seed"] == 3);
  CHECK(summary["inputs"]["positive"]["fnv1a64"] == fs::file_hash(d / "omega_pos.jsonl"));
  REQUIRE(summary["best"].is_object());
  const std::string best_path = summary["best"]["checkpoint"];
  const auto best_state = ckpt::load(best_path);
  REQUIRE(best_state.best.has_value());
  CHECK(summary["best"]["step"] == best_state.best->step);
  CHECK(summary["best"]["metrics"]["rbq"].get<double>() == best_state.best->metrics.rbq);

  const auto last = ckpt::load(t / "run/checkpoints/last.ckpt");
  CHECK(last.adv_steps == 12);
  CHECK(slurp(t / "run/history.csv") == train::history_csv(last.history));
  CHECK(last.history.size() == 5);  // steps 0, 3, 6, 9, 12
  CHECK(last.best->step == best_state.best->step);

  const auto echoed = config::resolve(config::parse_flat(slurp(t / "run/config.resolved")), {}, false);
  CHECK(echoed.train.to_json() == last.config.to_json());
  CHECK(echoed.out_dir == t / "run");
}

TEST_CASE("resume from a periodic checkpoint matches the uninterrupted run") {
  const auto& d = data_dir();
  TempDir t;
  write(t / "run.conf", tiny_config(d, t / "full"));
  REQUIRE(invoke({"train", "--config", t / "run.conf"}).code == 0);
  for (const char* step : {"step_0000008.ckpt", "step_0000024.ckpt"}) {
    const auto r = invoke({"train", "--config", t / "run.conf", "--out", t / "resumed", "--resume",
                        t / ("full/checkpoints/" + std::string(step))});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(slurp(t / "full/history.csv") == slurp(t / "resumed/history.csv"));
    CHECK(slurp(t / "full/checkpoints/last.ckpt") == slurp(t / "resumed/checkpoints/last.ckpt"));
    stdfs::remove_all(t.path / "resumed");
  }
}

TEST_CASE("collapse stop exits 0 and is noted in the summary") {
  const auto& d = data_dir();
  TempDir t;
  // A one-eval window with a factor barely above 1 stops at the first FID rise.
  write(t / "run.conf", tiny_config(d, t / "run",
                                    {{"collapse_factor", "1.000001"},
                                     {"collapse_window", "1"},
                                     {"adversarial_steps", "60"},
                                     {"eval_every", "2"}}));
  const auto r = invoke({"train", "--config", t / "run.conf"});
  CHECK(r.code == 0);
  const json summary = read_json(t / "run/summary.json");
  CHECK(summary["stop_reason"] == "collapse");
  CHECK(summary["steps"]["adversarial"].get<int>() < 60);
  REQUIRE(summary["best"].is_object());
  CHECK(summary["best"]["step"].get<int>() < summary["steps"]["adversarial"].get<int>());
}

TEST_CASE("numeric failure exits 3 and keeps the last good state") {
  const auto& d = data_dir();
  TempDir t;
  write(t / "run.conf", tiny_config(d, t / "run"));
  // A huge MLE rate drives the weights past the float range within a few steps.
  const auto r = invoke({"train", "--config", t / "run.conf", "--set", "lr_mle=1e305"});
  CHECK(r.code == 3);
  CHECK(r.err.find("numeric") != std::string::npos);
  const json summary = read_json(t / "run/summary.json");
  CHECK(summary["stop_reason"] == "numeric_failure");
  auto last = ckpt::load(t / "run/checkpoints/last.ckpt");
  CHECK(last.phase == train::Phase::kMle);
  for (const auto& [name, tensor] : last.gen.refs())
    for (double v : tensor->values()) REQUIRE_MESSAGE(std::isfinite(v), name);
}

TEST_CASE("generate is reproducible and writes unlabelled records") {
  const auto& d = data_dir();
  TempDir t;
  write(t / "run.conf", tiny_config(d, t / "run"));
  REQUIRE(invoke({"train", "--config", t / "run.conf"}).code == 0);
  const std::string ck = t / "run/checkpoints/last.ckpt";
  REQUIRE(invoke({"generate", "--checkpoint", ck, "--n", "300", "--seed", "9", "--out", t / "a.jsonl"}).code == 0);
  REQUIRE(invoke({"generate", "--checkpoint", ck, "--n", "300", "--seed", "9", "--out", t / "again/a.jsonl"}).code == 0);
  REQUIRE(invoke({"generate", "--checkpoint", ck, "--n", "300", "--seed", "10", "--out", t / "c.jsonl"}).code == 0);
  CHECK(slurp(t / "a.jsonl") == slurp(t / "again/a.jsonl"));
  CHECK(slurp(t / "a.jsonl.meta.json") == slurp(t / "again/a.jsonl.meta.json"));
  CHECK(slurp(t / "a.jsonl") != slurp(t / "c.jsonl"));

  const auto seqs = io::read_jsonl(t / "a.jsonl");
  CHECK(seqs.size() == 300);
  std::istringstream lines(slurp(t / "a.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    CHECK_FALSE(j.contains("label"));
    CHECK(j.contains("rbq"));
    CHECK(j["rules"].size() == 6);
    CHECK(j["events"][0] == "INI");
    CHECK(j["events"].size() == 21);
  }
  const json meta = read_json(t / "a.jsonl.meta.json");
  CHECK(meta["seed"] == 9);
  CHECK(meta["inputs"]["checkpoint"]["fnv1a64"] == fs::file_hash(ck));

  // --model current differs from best unless the best is the final state.
  REQUIRE(invoke({"generate", "--checkpoint", ck, "--n", "50", "--model", "current", "--out", t / "cur.jsonl"}).code == 0);
  CHECK(io::read_jsonl(t / "cur.jsonl").size() == 50);
}

TEST_CASE("generate rejects unsupported checkpoints explicitly") {
  const auto& d = data_dir();
  TempDir t;
  write(t / "run.conf", tiny_config(d, t / "run", {{"adversarial_steps", "0"}}));
  REQUIRE(invoke({"train", "--config", t / "run.conf"}).code == 0);
  std::string bytes = slurp(t / "run/checkpoints/last.ckpt");
  const auto pos = bytes.find("\"format\":1");
  REQUIRE(pos != std::string::npos);
  bytes.replace(pos, 10, "\"format\":7");
  write(t / "v7.ckpt", bytes);
  const auto r = invoke({"generate", "--checkpoint", t / "v7.ckpt", "--n", "5", "--out", t / "g.jsonl"});
  CHECK(r.code == 2);
  CHECK(r.err.find("version 7") != std::string::npos);
  CHECK(invoke({"generate", "--checkpoint", t / "none.ckpt", "--n", "5", "--out", t / "g.jsonl"}).code == 2);
}

TEST_CASE("evaluate a file against itself and against the other split") {
  const auto& d = data_dir();
  TempDir t;
  auto r = invoke({"evaluate", "--a", d / "omega_pos.jsonl", "--b", d / "omega_pos.jsonl", "--out", t / "self"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  json rep = read_json(t / "self/report.json");
  CHECK(std::abs(rep["fid"].get<double>()) < 1e-6);
  CHECK(std::abs(rep["mmd"].get<double>()) < 1e-12);
  CHECK(rep["fidh"].is_null());
  CHECK_FALSE(stdfs::exists(t.path / "self/prd.csv"));
  CHECK(rep["inputs"]["a"]["fnv1a64"] == fs::file_hash(d / "omega_pos.jsonl"));
  CHECK(rep["engine"] == train::kEngineVersion);
  CHECK(rep["features"]["fid_mmd"].is_string());

  r = invoke({"evaluate", "--a", d / "omega_neg.jsonl", "--b", d / "omega_pos.jsonl", "--out", t / "neg"});
  REQUIRE(r.code == 0);
  rep = read_json(t / "neg/report.json");
  CHECK(rep["fid"].get<double>() > 1.0);
  CHECK(rep["mmd"].get<double>() > 0.0);
  CHECK(rep["rbq"].get<double>() < 64.0);

  // Fixed bandwidth is honoured and echoed.
  r = invoke({"evaluate", "--a", d / "omega_neg.jsonl", "--b", d / "omega_pos.jsonl", "--out", t / "bw", "--set",
           "mmd_bandwidth=0.001"});
  REQUIRE(r.code == 0);
  rep = read_json(t / "bw/report.json");
  CHECK(rep["mmd_gamma"].get<double>() == 0.001);
  CHECK(rep["config"]["mmd_bandwidth"] == "0.001");
}

TEST_CASE("evaluate with a checkpoint adds FIDH, PRD and hidden-state exports") {
  const auto& d = data_dir();
  TempDir t;
  write(t / "run.conf", tiny_config(d, t / "run", {{"adversarial_steps", "0"}}));
  REQUIRE(invoke({"train", "--config", t / "run.conf"}).code == 0);
  const std::string ck = t / "run/checkpoints/last.ckpt";
  const auto r = invoke({"evaluate", "--a", d / "omega_neg.jsonl", "--b", d / "omega_pos.jsonl", "--checkpoint", ck,
                      "--out", t / "ev", "--set", "prd_clusters=5"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json rep = read_json(t / "ev/report.json");
  CHECK(rep["fidh"].get<double>() >= 0.0);
  CHECK(rep["prd"]["points"] == 1001);
  CHECK(rep["inputs"]["checkpoint"]["fnv1a64"] == fs::file_hash(ck));

  const std::string prd = slurp(t / "ev/prd.csv");
  CHECK(prd.rfind("precision,recall\n", 0) == 0);
  std::istringstream hidden(slurp(t / "ev/hidden_a.csv"));
  std::string header, line;
  std::getline(hidden, header);
  CHECK(header.rfind("d_prob,s0,", 0) == 0);
  std::size_t rows = 0;
  while (std::getline(hidden, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 128);
  }
  CHECK(rows == 200);

  // A length that does not match the files is a data error.
  CHECK(invoke({"evaluate", "--a", d / "omega_neg.jsonl", "--b", d / "omega_pos.jsonl", "--out", t / "x", "--set",
             "length=10"})
            .code == 2);
}
