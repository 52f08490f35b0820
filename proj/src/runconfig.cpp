#include "tseqgan/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "tseqgan/error.hpp"

namespace tseqgan::config {

using nlohmann::json;

const std::vector<KeySpec>& train_keys() {
  static const std::vector<KeySpec> keys{
      {"positive", KeyType::kString, "\"\"", "JSONL file of positive sequences"},
      {"negative", KeyType::kString, "\"\"", "JSONL file of negative sequences"},
      {"out_dir", KeyType::kString, "run", "output directory"},
      {"log_every", KeyType::kInt, "100", "progress lines every N steps (0 = quiet)"},
      {"seed", KeyType::kInt, "0", "seed for initialization, batching and sampling"},
      {"length", KeyType::kInt, "21", "sequence length including the INI step"},
      {"batch", KeyType::kInt, "64", "mini-batch size"},
      {"lr", KeyType::kFloat, "0.0001", "SGD learning rate"},
      {"lr_mle", KeyType::kOptFloat, "none", "learning rate for generator pre-training (none = lr)"},
      {"lr_disc_pretrain", KeyType::kOptFloat, "none", "learning rate for discriminator pre-training (none = lr)"},
      {"lr_adv", KeyType::kOptFloat, "none", "learning rate for the adversarial phase (none = lr)"},
      {"grad_clip_pretrain", KeyType::kFloat, "0", "global-norm gradient clip in pre-training (0 = off)"},
      {"grad_clip_adv", KeyType::kFloat, "5", "global-norm gradient clip in the adversarial phase (0 = off)"},
      {"pretrain_g_steps", KeyType::kInt, "2400", "generator MLE steps"},
      {"pretrain_d_steps", KeyType::kInt, "2000", "discriminator pre-training steps"},
      {"adversarial_steps", KeyType::kInt, "3000", "adversarial steps"},
      {"g_steps", KeyType::kInt, "1", "G-steps per adversarial step"},
      {"d_steps", KeyType::kInt, "1", "D-steps per adversarial step"},
      {"eval_every", KeyType::kInt, "50", "evaluate every N adversarial steps (0 = never)"},
      {"eval_batch", KeyType::kInt, "64", "size of the generated and reference eval batches"},
      {"checkpoint_every", KeyType::kInt, "500", "write a checkpoint every N global steps (0 = never)"},
      {"collapse_factor", KeyType::kFloat, "5", "stop when eval FID exceeds this times the recent median"},
      {"collapse_window", KeyType::kInt, "10", "number of recent evals in that median"},
      {"best_metric", KeyType::kString, "rbq", "best-model criterion: rbq (higher) or fidh (lower)"},
      {"holdout_fraction", KeyType::kFloat, "0", "tail fraction of each split held out of pre-training"},
      {"destabilize_after", KeyType::kInt, "0", "multiply the adversarial lr after N steps (0 = never)"},
      {"destabilize_factor", KeyType::kFloat, "100", "factor used by destabilize_after"},
      {"embed_dim", KeyType::kInt, "32", "event embedding width"},
      {"hidden_dim", KeyType::kInt, "64", "Time-LSTM hidden width"},
      {"init_stddev", KeyType::kFloat, "0.1", "standard deviation of initial weights"},
      {"forget_bias", KeyType::kFloat, "1", "initial forget-gate bias"},
      {"interval_activation", KeyType::kString, "sigmoid", "squashing of dt in the time gate: sigmoid or identity"},
      {"mmd_bandwidth", KeyType::kString, "median", "MMD kernel gamma: median (heuristic) or a positive number"},
      {"prd_clusters", KeyType::kInt, "20", "k-means clusters for PRD"},
      {"prd_angles", KeyType::kInt, "1001", "slopes on the PRD curve"},
      {"prd_restarts", KeyType::kInt, "10", "k-means restarts for PRD"},
      {"metrics_seed", KeyType::kInt, "0", "seed for the median subsample and k-means"},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
    return v.substr(1, v.size() - 2);
  return v;
}

const KeySpec& spec_for(const std::string& key) {
  for (const auto& k : train_keys())
    if (k.key == key) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

json typed(const KeySpec& spec, const std::string& raw, const std::string& where) {
  const std::string v = unquote(trim(raw));
  auto fail = [&](const char* want) -> json {
    throw ConfigError(where + ": key '" + spec.key + "' expects " + want + ", got '" + v + "'");
  };
  switch (spec.type) {
    case KeyType::kInt: {
      std::uint64_t x = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size() || v.empty()) return fail("a non-negative integer");
      return x;
    }
    case KeyType::kOptFloat:
      if (v == "none" || v == "null" || v.empty()) return nullptr;
      [[fallthrough]];
    case KeyType::kFloat: {
      char* end = nullptr;
      const double x = std::strtod(v.c_str(), &end);
      if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) return fail("a number");
      return x;
    }
    case KeyType::kBool:
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      return fail("true or false");
    case KeyType::kString:
      return v;
  }
  return fail("a value");
}

std::string env_name(const std::string& key) {
  std::string out = kEnvPrefix;
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string flat_value(const json& v) {
  if (v.is_null()) return "none";
  if (v.is_string()) return "\"" + v.get<std::string>() + "\"";
  if (v.is_number_float()) {
    std::ostringstream s;
    s.precision(17);
    s << v.get<double>();
    return s.str();
  }
  return v.dump();
}

}  // namespace

std::map<std::string, std::string> parse_flat(const std::string& text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    spec_for(key);
    if (out.count(key)) throw ConfigError(where + ": key '" + key + "' given twice");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig resolve(const std::map<std::string, std::string>& file, const std::map<std::string, std::string>& overrides,
                  bool use_env) {
  json merged;
  for (const auto& spec : train_keys()) {
    std::string raw = spec.default_value, where = "default";
    if (auto it = file.find(spec.key); it != file.end()) {
      raw = it->second;
      where = "config file";
    }
    if (use_env) {
      if (const char* e = std::getenv(env_name(spec.key).c_str())) {
        raw = e;
        where = "environment " + env_name(spec.key);
      }
    }
    if (auto it = overrides.find(spec.key); it != overrides.end()) {
      raw = it->second;
      where = "override";
    }
    merged[spec.key] = typed(spec, raw, where);
  }
  for (const auto& [k, v] : file) spec_for(k);
  for (const auto& [k, v] : overrides) spec_for(k);

  RunConfig rc;
  rc.positive = merged["positive"].get<std::string>();
  rc.negative = merged["negative"].get<std::string>();
  rc.out_dir = merged["out_dir"].get<std::string>();
  rc.log_every = merged["log_every"].get<std::size_t>();
  const std::string bw = merged["mmd_bandwidth"].get<std::string>();
  if (bw != "median") {
    char* end = nullptr;
    const double g = std::strtod(bw.c_str(), &end);
    if (bw.empty() || end != bw.c_str() + bw.size() || !(g > 0) || !std::isfinite(g))
      throw ConfigError("key 'mmd_bandwidth' expects median or a positive number, got '" + bw + "'");
    rc.metrics.mmd.gamma = g;
  }
  rc.metrics.prd.num_clusters = merged["prd_clusters"].get<std::size_t>();
  rc.metrics.prd.num_angles = merged["prd_angles"].get<std::size_t>();
  rc.metrics.prd.restarts = merged["prd_restarts"].get<std::size_t>();
  const auto mseed = merged["metrics_seed"].get<std::uint64_t>();
  rc.metrics.mmd.seed = mseed;
  rc.metrics.prd.seed = mseed;
  if (rc.metrics.prd.num_clusters < 1 || rc.metrics.prd.num_angles < 2 || rc.metrics.prd.restarts < 1)
    throw ConfigError("prd_clusters and prd_restarts must be positive, prd_angles at least 2");
  for (const char* k : {"positive", "negative", "out_dir", "log_every", "mmd_bandwidth", "prd_clusters", "prd_angles",
                        "prd_restarts", "metrics_seed"})
    merged.erase(k);
  try {
    rc.train = train::TrainConfig::from_json(merged);
    rc.train.validate();
    rc.metrics.length = rc.train.length;
    rc.metrics.activation = rc.train.net.interval_activation;
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

json RunConfig::to_json() const {
  json j = train.to_json();
  j["positive"] = positive;
  j["negative"] = negative;
  j["out_dir"] = out_dir;
  j["log_every"] = log_every;
  if (metrics.mmd.gamma) {
    std::ostringstream g;
    g.precision(17);
    g << *metrics.mmd.gamma;
    j["mmd_bandwidth"] = g.str();
  } else {
    j["mmd_bandwidth"] = "median";
  }
  j["prd_clusters"] = metrics.prd.num_clusters;
  j["prd_angles"] = metrics.prd.num_angles;
  j["prd_restarts"] = metrics.prd.restarts;
  j["metrics_seed"] = metrics.prd.seed;
  return j;
}

std::string RunConfig::to_flat() const {
  const json j = to_json();
  std::string out;
  for (const auto& spec : train_keys()) out += spec.key + " = " + flat_value(j.at(spec.key)) + "\n";
  return out;
}

std::string defaults_text() {
  std::string out;
  for (const auto& spec : train_keys()) out += "# " + spec.help + "\n" + spec.key + " = " + spec.default_value + "\n";
  return out;
}

}  // namespace tseqgan::config
