#include "tseqgan/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "tseqgan/error.hpp"
#include "tseqgan/fsutil.hpp"

namespace tseqgan::ckpt {

using nlohmann::json;
using train::TrainState;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename P>
void add_refs(diff::ConstParamRefs& out, const P& p, const std::string& prefix) {
  auto r = p.refs(prefix);
  out.insert(out.end(), r.begin(), r.end());
}

template <typename P>
void add_refs(diff::ParamRefs& out, P& p, const std::string& prefix) {
  auto r = p.refs(prefix);
  out.insert(out.end(), r.begin(), r.end());
}

json row_json(const train::HistoryRow& r) {
  return json::array({r.step, r.rbq, r.mad, r.fid, r.mmd, r.fidh});
}

train::HistoryRow row_from(const json& j) {
  if (!j.is_array() || j.size() != 6) throw FormatError("checkpoint: bad history row");
  return {j[0].get<std::size_t>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>(),      j[4].get<double>(), j[5].get<double>()};
}

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

}  // namespace

std::string serialize(const TrainState& s) {
  diff::ConstParamRefs tensors;
  add_refs(tensors, s.gen, "gen.");
  add_refs(tensors, s.disc, "disc.");
  add_refs(tensors, s.critic, "critic.");
  if (s.best) {
    add_refs(tensors, s.best->gen, "best/gen.");
    add_refs(tensors, s.best->disc, "best/disc.");
    add_refs(tensors, s.best->critic, "best/critic.");
  }

  json table = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    table.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}, {"count", t->size()}});
    offset += t->size();
  }
  json history = json::array();
  for (const auto& r : s.history) history.push_back(row_json(r));

  json m;
  m["format"] = kFormatVersion;
  m["engine"] = train::kEngineVersion;
  m["config"] = s.config.to_json();
  m["phase"] = train::to_string(s.phase);
  m["rng"] = s.rng.state();
  m["eval_rng"] = s.eval_rng.state();
  m["steps"] = {{"mle", s.mle_steps}, {"disc", s.disc_steps}, {"adv", s.adv_steps}};
  m["mle_loss"] = s.mle_loss;
  m["disc_loss"] = s.disc_loss;
  m["history"] = std::move(history);
  m["stop_reason"] = s.stop_reason;
  m["holdout_auc"] = s.holdout_auc ? json(*s.holdout_auc) : json(nullptr);
  m["best"] = s.best ? json{{"step", s.best->step}, {"metrics", row_json(s.best->metrics)}} : json(nullptr);
  m["tensors"] = std::move(table);
  const std::string manifest = m.dump();

  std::string out(kMagic, 8);
  put_u64(out, manifest.size());
  out += manifest;
  const std::size_t blob_start = out.size();
  out.resize(blob_start + offset * sizeof(double));
  std::size_t pos = blob_start;
  for (const auto& [name, t] : tensors) {
    std::memcpy(out.data() + pos, t->data().data(), t->size() * sizeof(double));
    pos += t->size() * sizeof(double);
  }
  return out;
}

TrainState deserialize(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 8, kMagic, 8) != 0) throw FormatError("not a checkpoint (bad magic)");
  std::uint64_t mlen;
  std::memcpy(&mlen, bytes.data() + 8, 8);
  if (mlen > bytes.size() - 16) throw FormatError("checkpoint: truncated manifest");
  json m;
  try {
    m = json::parse(bytes.substr(16, mlen));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  try {
    const int version = m.at("format").get<int>();
    if (version != kFormatVersion)
      throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kFormatVersion) + ")");
    TrainState s;
    s.config = train::TrainConfig::from_json(m.at("config"));
    s.phase = train::parse_phase(m.at("phase").get<std::string>());
    s.gen = nets::GeneratorParams::zeros(s.config.net);
    s.disc = nets::DiscriminatorParams::zeros(s.config.net);
    s.critic = nets::CriticParams::zeros(s.config.net);
    s.rng.set_state(m.at("rng").get<std::string>());
    s.eval_rng.set_state(m.at("eval_rng").get<std::string>());
    s.mle_steps = m.at("steps").at("mle").get<std::size_t>();
    s.disc_steps = m.at("steps").at("disc").get<std::size_t>();
    s.adv_steps = m.at("steps").at("adv").get<std::size_t>();
    s.mle_loss = m.at("mle_loss").get<std::vector<double>>();
    s.disc_loss = m.at("disc_loss").get<std::vector<double>>();
    for (const auto& r : m.at("history")) s.history.push_back(row_from(r));
    s.stop_reason = m.at("stop_reason").get<std::string>();
    if (!m.at("holdout_auc").is_null()) s.holdout_auc = m.at("holdout_auc").get<double>();

    diff::ParamRefs targets;
    add_refs(targets, s.gen, "gen.");
    add_refs(targets, s.disc, "disc.");
    add_refs(targets, s.critic, "critic.");
    if (!m.at("best").is_null()) {
      train::BestSnapshot b;
      b.step = m["best"].at("step").get<std::size_t>();
      b.metrics = row_from(m["best"].at("metrics"));
      b.gen = nets::GeneratorParams::zeros(s.config.net);
      b.disc = nets::DiscriminatorParams::zeros(s.config.net);
      b.critic = nets::CriticParams::zeros(s.config.net);
      s.best = std::move(b);
      add_refs(targets, s.best->gen, "best/gen.");
      add_refs(targets, s.best->disc, "best/disc.");
      add_refs(targets, s.best->critic, "best/critic.");
    }

    const json& table = m.at("tensors");
    if (table.size() != targets.size()) throw FormatError("checkpoint: tensor table does not match the config");
    const std::size_t blob = 16 + mlen;
    std::size_t total = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const json& e = table[i];
      auto& [name, t] = targets[i];
      if (e.at("name").get<std::string>() != name) throw FormatError("checkpoint: unexpected tensor " + e.at("name").get<std::string>());
      if (e.at("shape").get<std::vector<std::size_t>>() != t->shape()) throw FormatError("checkpoint: shape mismatch for " + name);
      const std::size_t off = e.at("offset").get<std::size_t>(), count = e.at("count").get<std::size_t>();
      if (count != t->size() || off != total) throw FormatError("checkpoint: bad layout for " + name);
      if (blob + (off + count) * sizeof(double) > bytes.size()) throw FormatError("checkpoint: truncated blob");
      std::memcpy(t->data().data(), bytes.data() + blob + off * sizeof(double), count * sizeof(double));
      total += count;
    }
    if (blob + total * sizeof(double) != bytes.size()) throw FormatError("checkpoint: trailing bytes");
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save(const std::filesystem::path& path, const TrainState& s) { fs::write_file_atomic(path, serialize(s)); }

TrainState load(const std::filesystem::path& path) { return deserialize(fs::read_file(path)); }

TrainState with_best_as_current(const TrainState& s) {
  TrainState out = s;
  if (s.best) {
    out.gen = s.best->gen;
    out.disc = s.best->disc;
    out.critic = s.best->critic;
  }
  return out;
}

}  // namespace tseqgan::ckpt
