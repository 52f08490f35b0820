#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tseqgan/checkpoint.hpp"
#include "tseqgan/dataio.hpp"
#include "tseqgan/error.hpp"
#include "tseqgan/fsutil.hpp"
#include "tseqgan/metrics.hpp"
#include "tseqgan/runconfig.hpp"
#include "tseqgan/synthdata.hpp"
#include "tseqgan/training.hpp"

namespace tseqgan::cli {

namespace stdfs = std::filesystem;
using nlohmann::json;

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json file_entry(const stdfs::path& p) { return {{"path", p.string()}, {"fnv1a64", fs::file_hash(p)}}; }

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

config::RunConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  std::map<std::string, std::string> file;
  if (!path.empty()) {
    std::string text;
    try {
      text = fs::read_file(path);
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
    file = config::parse_flat(text, path);
  }
  return config::resolve(file, parse_overrides(sets));
}

// --- synth ---------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t block_size = 4096;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  synth::BuildOptions opts;
  opts.n_target = a.n;
  opts.seed = a.seed;
  opts.block_size = a.block_size;
  const synth::Dataset ds = synth::build_dataset(opts);
  const stdfs::path dir(a.out);
  io::write_jsonl(dir / "omega_pos.jsonl", ds.positive);
  io::write_jsonl(dir / "omega_neg.jsonl", ds.negative);
  json meta;
  meta["engine"] = train::kEngineVersion;
  meta["rule_engine"] = synth::kRuleEngineVersion;
  meta["seed"] = a.seed;
  meta["n"] = a.n;
  meta["length"] = opts.length;
  meta["block_size"] = opts.block_size;
  meta["attempts"] = ds.stats.attempts;
  meta["positive_seen"] = ds.stats.positive_seen;
  meta["negative_seen"] = ds.stats.negative_seen;
  meta["positive_rate"] = ds.stats.positive_rate();
  // Names relative to the metadata file so that the output directory can move.
  meta["files"] = {{"positive", {{"path", "omega_pos.jsonl"}, {"fnv1a64", fs::file_hash(dir / "omega_pos.jsonl")}}},
                   {"negative", {{"path", "omega_neg.jsonl"}, {"fnv1a64", fs::file_hash(dir / "omega_neg.jsonl")}}}};
  fs::write_file_atomic(dir / "metadata.json", dump(meta));
  out << "synth: " << a.n << " + " << a.n << " sequences from " << ds.stats.attempts << " draws (positive rate "
      << ds.stats.positive_rate() << ") -> " << dir.string() << "\n";
  return kExitOk;
}

// --- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string resume;
  std::string out;
  std::vector<std::string> sets;
};

void require_split(const std::vector<Sequence>& seqs, bool positive, const std::string& path) {
  if (seqs.empty()) throw ContractError(path + ": no sequences");
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (synth::check_rules(seqs[i]).positive != positive)
      throw ContractError(path + ": record " + std::to_string(i + 1) + " is not " +
                          (positive ? "positive" : "negative"));
}

json history_json(const train::HistoryRow& r) {
  return {{"step", r.step}, {"rbq", r.rbq}, {"mad", r.mad}, {"fid", r.fid}, {"mmd", r.mmd}, {"fidh", r.fidh}};
}

std::string loss_csv(const std::vector<double>& v) {
  std::string s = "step,loss\n";
  for (std::size_t i = 0; i < v.size(); ++i) s += std::to_string(i + 1) + "," + fmt_double(v[i]) + "\n";
  return s;
}

class TrainWriter {
 public:
  TrainWriter(const config::RunConfig& rc, json inputs, std::ostream& out)
      : dir_(rc.out_dir), ckdir_(dir_ / "checkpoints"), rc_(rc), inputs_(std::move(inputs)), out_(out) {}

  void on_event(const train::TrainState& s, train::Event e) {
    using train::Event;
    switch (e) {
      case Event::kInit:
        ckpt::save(ckdir_ / "g0.ckpt", s);
        break;
      case Event::kMleDone:
        ckpt::save(ckdir_ / "g1.ckpt", s);
        fs::write_file_atomic(dir_ / "mle_loss.csv", loss_csv(s.mle_loss));
        break;
      case Event::kPretrainDone:
        ckpt::save(ckdir_ / "pretrained.ckpt", s);
        fs::write_file_atomic(dir_ / "disc_loss.csv", loss_csv(s.disc_loss));
        break;
      case Event::kPeriodic: {
        char name[40];
        std::snprintf(name, sizeof name, "step_%07zu.ckpt", s.global_step());
        ckpt::save(ckdir_ / name, s);
        break;
      }
      case Event::kEval:
        fs::write_file_atomic(dir_ / "history.csv", train::history_csv(s.history));
        break;
      case Event::kBest:
        ckpt::save(ckdir_ / "best.ckpt", s);
        fs::write_file_atomic(ckdir_ / "BEST", dump({{"checkpoint", "best.ckpt"},
                                                     {"step", s.best->step},
                                                     {"metric", train::to_string(s.config.best_metric)},
                                                     {"metrics", history_json(s.best->metrics)}}));
        break;
      case Event::kCollapse:
        out_ << "collapse detected at adversarial step " << s.adv_steps << "\n";
        break;
      case Event::kDone:
        finish(s, std::nullopt);
        break;
    }
  }

  void finish(const train::TrainState& s, const std::optional<std::string>& error) {
    ckpt::save(ckdir_ / "last.ckpt", s);
    fs::write_file_atomic(dir_ / "history.csv", train::history_csv(s.history));
    if (!s.mle_loss.empty()) fs::write_file_atomic(dir_ / "mle_loss.csv", loss_csv(s.mle_loss));
    if (!s.disc_loss.empty()) fs::write_file_atomic(dir_ / "disc_loss.csv", loss_csv(s.disc_loss));
    json j;
    j["engine"] = train::kEngineVersion;
    j["seed"] = s.config.seed;
    j["inputs"] = inputs_;
    j["config"] = rc_.to_json();
    j["stop_reason"] = error ? "numeric_failure" : s.stop_reason;
    if (error) j["error"] = *error;
    j["phase"] = train::to_string(s.phase);
    j["steps"] = {{"mle", s.mle_steps}, {"disc_pretrain", s.disc_steps}, {"adversarial", s.adv_steps}};
    j["holdout_auc"] = s.holdout_auc ? json(*s.holdout_auc) : json(nullptr);
    if (s.best) {
      j["best"] = {{"checkpoint", (ckdir_ / "best.ckpt").string()},
                   {"step", s.best->step},
                   {"metric", train::to_string(s.config.best_metric)},
                   {"metrics", history_json(s.best->metrics)}};
    } else {
      j["best"] = nullptr;
    }
    j["last"] = {{"checkpoint", (ckdir_ / "last.ckpt").string()},
                 {"metrics", s.history.empty() ? json(nullptr) : history_json(s.history.back())}};
    j["files"] = {{"history", (dir_ / "history.csv").string()}, {"config", (dir_ / "config.resolved").string()}};
    fs::write_file_atomic(dir_ / "summary.json", dump(j));
  }

 private:
  stdfs::path dir_, ckdir_;
  const config::RunConfig& rc_;
  json inputs_;
  std::ostream& out_;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> sets = a.sets;
  if (!a.out.empty()) sets.push_back("out_dir=" + a.out);
  config::RunConfig rc = load_config(a.config, sets);

  std::optional<train::TrainState> resumed;
  if (!a.resume.empty()) {
    resumed = ckpt::load(a.resume);
    if (resumed->config.to_json() != rc.train.to_json())
      err << "note: training settings are taken from the checkpoint " << a.resume << "\n";
    rc.train = resumed->config;
  }
  if (rc.positive.empty() || rc.negative.empty())
    throw ConfigError("config must set 'positive' and 'negative' dataset paths");
  for (const auto& p : {rc.positive, rc.negative})
    if (!stdfs::exists(p)) throw ContractError("dataset file not found: " + p);

  io::ReadOptions ro;
  ro.length = rc.train.length;
  const std::vector<Sequence> pos = io::read_jsonl(rc.positive, ro);
  const std::vector<Sequence> neg = io::read_jsonl(rc.negative, ro);
  require_split(pos, true, rc.positive);
  require_split(neg, false, rc.negative);

  const stdfs::path dir(rc.out_dir);
  fs::write_file_atomic(dir / "config.resolved", rc.to_flat());
  out << "resolved configuration written to " << (dir / "config.resolved").string() << "\n";

  json inputs = {{"positive", file_entry(rc.positive)}, {"negative", file_entry(rc.negative)}};
  if (resumed) inputs["resume"] = file_entry(a.resume);
  train::TrainState s = resumed ? std::move(*resumed) : train::init_state(rc.train);
  TrainWriter writer(rc, inputs, out);

  train::Hooks hooks;
  hooks.on_event = [&](const train::TrainState& st, train::Event e) { writer.on_event(st, e); };
  const std::size_t every = rc.log_every;
  hooks.log = [&](const std::string& line) {
    if (every > 0) out << line << std::endl;
  };
  try {
    train::run(s, {&pos, &neg}, hooks);
  } catch (const NumericError& e) {
    writer.finish(s, std::string(e.what()));
    err << "numeric failure: " << e.what() << "\nlast good state saved to " << (dir / "checkpoints/last.ckpt").string()
        << "\n";
    return kExitNumeric;
  }
  out << "stopped: " << s.stop_reason << "; summary in " << (dir / "summary.json").string() << "\n";
  return kExitOk;
}

// --- generate ------------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string which = "best";
};

train::TrainState load_model(const std::string& path, const std::string& which, std::string& used) {
  train::TrainState s = ckpt::load(path);
  if (which == "best" && s.best) {
    used = "best";
    return ckpt::with_best_as_current(s);
  }
  used = "current";
  return s;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  std::string used;
  const train::TrainState s = load_model(a.checkpoint, a.which, used);
  Rng rng(a.seed);
  const nets::Rollout r = nets::generate_batch(s.gen, a.n, s.config.length, rng, s.config.net.interval_activation);
  io::write_jsonl(a.out, r.sequences, false);
  json meta;
  meta["engine"] = train::kEngineVersion;
  meta["seed"] = a.seed;
  meta["n"] = a.n;
  meta["length"] = s.config.length;
  meta["model"] = used;
  meta["model_step"] = used == "best" ? s.best->step : s.adv_steps;
  meta["inputs"] = {{"checkpoint", file_entry(a.checkpoint)}};
  meta["output"] = {{"path", stdfs::path(a.out).filename().string()}, {"fnv1a64", fs::file_hash(a.out)}};
  meta["rbq_mean"] = metrics::rbq_mean(r.sequences);
  fs::write_file_atomic(a.out + ".meta.json", dump(meta));
  out << "generated " << a.n << " sequences (" << used << " model) -> " << a.out << "\n";
  return kExitOk;
}

// --- evaluate ------------------------------------------------------------------

struct EvaluateArgs {
  std::string a, b;
  std::string checkpoint;
  std::string which = "best";
  std::string out;
  std::string config;
  std::vector<std::string> sets;
};

std::string hidden_csv(const nets::Discrimination& d) {
  std::string s = "d_prob";
  const std::size_t dim = d.hidden.cols();
  for (std::size_t j = 0; j < dim; ++j) s += ",s" + std::to_string(j);
  s += "\n";
  for (std::size_t i = 0; i < d.probability.size(); ++i) {
    s += fmt_double(d.probability[i]);
    for (std::size_t j = 0; j < dim; ++j) s += "," + fmt_double(d.hidden.at(i, j));
    s += "\n";
  }
  return s;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  config::RunConfig rc = load_config(a.config, a.sets);
  std::optional<train::TrainState> model;
  std::string used;
  if (!a.checkpoint.empty()) {
    model = load_model(a.checkpoint, a.which, used);
    if (model->config.length != rc.train.length)
      throw ContractError("checkpoint length " + std::to_string(model->config.length) + " differs from length " +
                          std::to_string(rc.train.length));
    rc.metrics.activation = model->config.net.interval_activation;
  }
  io::ReadOptions ro;
  ro.length = rc.train.length;
  const std::vector<Sequence> xa = io::read_jsonl(a.a, ro), xb = io::read_jsonl(a.b, ro);
  if (xa.size() < 2 || xb.size() < 2) throw ContractError("both inputs need at least two sequences");

  metrics::ReportOptions opts = rc.metrics;
  opts.with_prd = model.has_value();
  const metrics::MetricReport rep =
      metrics::evaluate(xa, xb, model ? &model->disc : nullptr, stdfs::path(a.b).filename().string(), opts);

  const stdfs::path dir(a.out);
  json j = rep.to_json();
  j["engine"] = train::kEngineVersion;
  j["inputs"] = {{"a", file_entry(a.a)}, {"b", file_entry(a.b)}};
  json options = rc.to_json();
  json cfg = {{"length", rc.train.length}};
  for (const char* k : {"mmd_bandwidth", "prd_clusters", "prd_angles", "prd_restarts", "metrics_seed"})
    cfg[k] = options[k];
  j["config"] = cfg;
  if (model) {
    j["inputs"]["checkpoint"] = file_entry(a.checkpoint);
    j["model"] = used;
    const nets::Discrimination da = nets::discriminate(model->disc, xa, rc.train.length, opts.activation);
    const nets::Discrimination db = nets::discriminate(model->disc, xb, rc.train.length, opts.activation);
    fs::write_file_atomic(dir / "hidden_a.csv", hidden_csv(da));
    fs::write_file_atomic(dir / "hidden_b.csv", hidden_csv(db));
    fs::write_file_atomic(dir / "prd.csv", metrics::prd_csv(rep.prd));
    j["files"] = {{"prd", (dir / "prd.csv").string()},
                  {"hidden_a", (dir / "hidden_a.csv").string()},
                  {"hidden_b", (dir / "hidden_b.csv").string()}};
  }
  fs::write_file_atomic(dir / "report.json", dump(j));
  out << "rbq " << rep.rbq_mean << " mad " << rep.mad << " fid " << rep.fid << " mmd " << rep.mmd;
  if (rep.fidh) out << " fidh " << *rep.fidh;
  out << "\nreport -> " << (dir / "report.json").string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-LSTM sequence GAN: synthetic data, training, generation and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(train::kEngineVersion));

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "build balanced positive and negative datasets");
  synth->add_option("--n", sa.n, "sequences per class")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", sa.seed, "random seed")->capture_default_str();
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--block-size", sa.block_size, "draws per random stream")->capture_default_str()->check(
      CLI::PositiveNumber);

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "pre-train and adversarially train a generator");
  trainc->add_option("--config", ta.config, "config file (key = value lines)");
  trainc->add_option("--resume", ta.resume, "checkpoint to continue from");
  trainc->add_option("--out", ta.out, "output directory (overrides out_dir)");
  trainc->add_option("--set", ta.sets, "key=value override, repeatable");
  bool print_defaults = false;
  trainc->add_flag("--print-defaults", print_defaults, "print every config key with its default and exit");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "sample sequences from a checkpoint");
  gen->add_option("--checkpoint", ga.checkpoint, "checkpoint file")->required();
  gen->add_option("--n", ga.n, "number of sequences")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", ga.seed, "random seed")->capture_default_str();
  gen->add_option("--out", ga.out, "output JSONL file")->required();
  gen->add_option("--model", ga.which, "best or current networks")
      ->capture_default_str()
      ->check(CLI::IsMember({"best", "current"}));

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "score sequences in --a against reference sequences in --b");
  eval->add_option("--a", ea.a, "sequences to evaluate")->required();
  eval->add_option("--b", ea.b, "reference sequences")->required();
  eval->add_option("--checkpoint", ea.checkpoint, "checkpoint whose discriminator gives FIDH and PRD features");
  eval->add_option("--model", ea.which, "best or current networks")
      ->capture_default_str()
      ->check(CLI::IsMember({"best", "current"}));
  eval->add_option("--out", ea.out, "output directory")->required();
  eval->add_option("--config", ea.config, "config file for metric options");
  eval->add_option("--set", ea.sets, "key=value override, repeatable");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sa, out);
    if (*trainc) {
      if (print_defaults) {
        out << config::defaults_text();
        return kExitOk;
      }
      return cmd_train(ta, out, err);
    }
    if (*gen) return cmd_generate(ga, out);
    if (*eval) return cmd_evaluate(ea, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace tseqgan::cli
