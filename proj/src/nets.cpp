#include "tseqgan/nets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tseqgan/error.hpp"

namespace tseqgan::nets {

namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

Trunk zero_trunk(const NetConfig& cfg) {
  return Trunk{Tensor::matrix(kNumEventTypes, cfg.embed_dim), CellParams::zeros(cfg.embed_dim, cfg.hidden_dim)};
}

Trunk random_trunk(const NetConfig& cfg, Rng& rng) {
  Trunk t;
  t.embedding = gaussian(kNumEventTypes, cfg.embed_dim, rng, cfg.init_stddev);
  t.cell = CellParams::random(cfg.embed_dim, cfg.hidden_dim, rng, cfg.init_stddev, cfg.forget_bias);
  return t;
}

template <typename Refs, typename TrunkT>
void trunk_refs(TrunkT& t, const std::string& prefix, Refs& out) {
  out.emplace_back(prefix + "embedding", &t.embedding);
  auto cell = t.cell.refs(prefix + "cell.");
  out.insert(out.end(), cell.begin(), cell.end());
}

TrunkVars bind_trunk(Tape& tape, const Trunk& t, bool trainable, const std::string& prefix, IntervalActivation act) {
  TrunkVars v;
  v.embedding = trainable ? tape.parameter(prefix + "embedding", t.embedding) : tape.constant(t.embedding);
  v.cell = CellVars::bind(tape, t.cell, prefix + "cell.", trainable, act);
  return v;
}

Var leaf(Tape& tape, const std::string& name, const Tensor& t, bool trainable) {
  return trainable ? tape.parameter(name, t) : tape.constant(t);
}

Var affine(Var x, Var w, Var b) { return diff::add_row(diff::matmul(x, w), b); }

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double gaussian_log_pdf(double x, double mu, double logvar) {
  const double d = x - mu;
  return -0.5 * d * d * std::exp(-logvar) - 0.5 * logvar - kHalfLog2Pi;
}

double masked_log_softmax(const std::array<double, kNumEventTypes>& logits, std::size_t target) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  double s = 0.0;
  for (double z : logits) {
    if (std::isfinite(z)) s += std::exp(z - mx);
  }
  return logits[target] - mx - std::log(s);
}

// Step-by-step evaluation with a fresh tape per step so that memory stays
// bounded for large inference batches.
class InferenceTrunk {
 public:
  InferenceTrunk(const Trunk& trunk, IntervalActivation act, std::size_t batch)
      : trunk_(trunk), act_(act), c_(Tensor::matrix(batch, trunk.cell.hidden_dim)), h_(c_), T_(c_) {}

  // Consumes one step; leaves the new state on `tape` and returns it.
  CellState step(Tape& tape, const std::vector<std::size_t>& types, const Tensor& intervals) {
    TrunkVars vars = bind_trunk(tape, trunk_, false, "", act_);
    CellState prev{tape.constant(c_), tape.constant(h_), tape.constant(T_)};
    CellState s = trunk_step(vars, types, intervals, prev);
    c_ = s.c.value();
    h_ = s.h.value();
    T_ = s.T.value();
    return s;
  }

 private:
  const Trunk& trunk_;
  IntervalActivation act_;
  Tensor c_, h_, T_;
};

std::vector<std::vector<const Sequence*>> chunks(const std::vector<Sequence>& seqs, std::size_t size) {
  std::vector<std::vector<const Sequence*>> out;
  for (std::size_t start = 0; start < seqs.size(); start += size) {
    std::vector<const Sequence*> c;
    for (std::size_t i = start; i < std::min(seqs.size(), start + size); ++i) c.push_back(&seqs[i]);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

// --- SequenceBatch ------------------------------------------------------------

SequenceBatch SequenceBatch::from(const std::vector<const Sequence*>& seqs, std::size_t length) {
  if (seqs.empty()) throw ContractError("SequenceBatch: empty batch");
  SequenceBatch b;
  b.batch = seqs.size();
  b.length = length;
  b.types.assign(length, std::vector<std::size_t>(seqs.size()));
  b.intervals.assign(length, Tensor::matrix(seqs.size(), 1));
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    validate_sequence(*seqs[r], length);
    for (std::size_t m = 0; m < length; ++m) {
      b.types[m][r] = index((*seqs[r])[m].type);
      b.intervals[m][r] = (*seqs[r])[m].dt;
    }
  }
  return b;
}

SequenceBatch SequenceBatch::from(const std::vector<Sequence>& seqs, std::size_t length) {
  std::vector<const Sequence*> ptrs;
  ptrs.reserve(seqs.size());
  for (const auto& s : seqs) ptrs.push_back(&s);
  return from(ptrs, length);
}

// --- Parameters -------------------------------------------------------------------

GeneratorParams GeneratorParams::zeros(const NetConfig& cfg) {
  GeneratorParams g;
  g.trunk = zero_trunk(cfg);
  g.W_type = Tensor::matrix(2 * cfg.hidden_dim, kNumEventTypes);
  g.b_type = Tensor({kNumEventTypes}, 0.0);
  g.W_interval = Tensor::matrix(2 * cfg.hidden_dim, 2);
  g.b_interval = Tensor({2}, 0.0);
  return g;
}

GeneratorParams GeneratorParams::random(const NetConfig& cfg, Rng& rng) {
  GeneratorParams g = zeros(cfg);
  g.trunk = random_trunk(cfg, rng);
  g.W_type = gaussian(2 * cfg.hidden_dim, kNumEventTypes, rng, cfg.init_stddev);
  g.W_interval = gaussian(2 * cfg.hidden_dim, 2, rng, cfg.init_stddev);
  return g;
}

diff::ParamRefs GeneratorParams::refs(const std::string& prefix) {
  diff::ParamRefs out;
  trunk_refs(trunk, prefix, out);
  out.emplace_back(prefix + "W_type", &W_type);
  out.emplace_back(prefix + "b_type", &b_type);
  out.emplace_back(prefix + "W_interval", &W_interval);
  out.emplace_back(prefix + "b_interval", &b_interval);
  return out;
}

diff::ConstParamRefs GeneratorParams::refs(const std::string& prefix) const {
  diff::ConstParamRefs out;
  trunk_refs(trunk, prefix, out);
  out.emplace_back(prefix + "W_type", &W_type);
  out.emplace_back(prefix + "b_type", &b_type);
  out.emplace_back(prefix + "W_interval", &W_interval);
  out.emplace_back(prefix + "b_interval", &b_interval);
  return out;
}

diff::ParamRefs ScorerParams::refs(const std::string& prefix) {
  diff::ParamRefs out;
  trunk_refs(trunk, prefix, out);
  out.emplace_back(prefix + "W_out", &W_out);
  out.emplace_back(prefix + "b_out", &b_out);
  return out;
}

diff::ConstParamRefs ScorerParams::refs(const std::string& prefix) const {
  diff::ConstParamRefs out;
  trunk_refs(trunk, prefix, out);
  out.emplace_back(prefix + "W_out", &W_out);
  out.emplace_back(prefix + "b_out", &b_out);
  return out;
}

namespace {

template <typename P>
P zero_scorer(const NetConfig& cfg) {
  P p;
  p.trunk = zero_trunk(cfg);
  p.W_out = Tensor::matrix(2 * cfg.hidden_dim, 1);
  p.b_out = Tensor({1}, 0.0);
  return p;
}

template <typename P>
P random_scorer(const NetConfig& cfg, Rng& rng) {
  P p = zero_scorer<P>(cfg);
  p.trunk = random_trunk(cfg, rng);
  p.W_out = gaussian(2 * cfg.hidden_dim, 1, rng, cfg.init_stddev);
  return p;
}

}  // namespace

DiscriminatorParams DiscriminatorParams::zeros(const NetConfig& cfg) { return zero_scorer<DiscriminatorParams>(cfg); }
DiscriminatorParams DiscriminatorParams::random(const NetConfig& cfg, Rng& rng) {
  return random_scorer<DiscriminatorParams>(cfg, rng);
}
CriticParams CriticParams::zeros(const NetConfig& cfg) { return zero_scorer<CriticParams>(cfg); }
CriticParams CriticParams::random(const NetConfig& cfg, Rng& rng) { return random_scorer<CriticParams>(cfg, rng); }

// --- Policy -----------------------------------------------------------------------

std::array<double, kNumEventTypes> PolicyOutput::probabilities() const {
  std::array<double, kNumEventTypes> p{};
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  double s = 0.0;
  for (std::size_t k = 0; k < kNumEventTypes; ++k) {
    p[k] = std::isfinite(logits[k]) ? std::exp(logits[k] - mx) : 0.0;
    s += p[k];
  }
  for (double& v : p) v /= s;
  return p;
}

const std::vector<bool>& sampling_mask() {
  static const std::vector<bool> mask = [] {
    std::vector<bool> m(kNumEventTypes, false);
    for (std::size_t k = 0; k < kNumObservableTypes; ++k) m[k] = true;
    return m;
  }();
  return mask;
}

GeneratorVars GeneratorVars::bind(Tape& tape, const GeneratorParams& p, bool trainable, const std::string& prefix,
                                  IntervalActivation act) {
  GeneratorVars v;
  v.trunk = bind_trunk(tape, p.trunk, trainable, prefix, act);
  v.W_type = leaf(tape, prefix + "W_type", p.W_type, trainable);
  v.b_type = leaf(tape, prefix + "b_type", p.b_type, trainable);
  v.W_interval = leaf(tape, prefix + "W_interval", p.W_interval, trainable);
  v.b_interval = leaf(tape, prefix + "b_interval", p.b_interval, trainable);
  return v;
}

ScorerVars ScorerVars::bind(Tape& tape, const ScorerParams& p, bool trainable, const std::string& prefix,
                            IntervalActivation act) {
  ScorerVars v;
  v.trunk = bind_trunk(tape, p.trunk, trainable, prefix, act);
  v.W_out = leaf(tape, prefix + "W_out", p.W_out, trainable);
  v.b_out = leaf(tape, prefix + "b_out", p.b_out, trainable);
  return v;
}

CellState trunk_step(const TrunkVars& trunk, const std::vector<std::size_t>& types, const Tensor& intervals,
                     const CellState& prev) {
  Tape& tape = *trunk.embedding.tape;
  Var x = diff::gather_rows(trunk.embedding, types);
  Var dt = tape.constant(intervals);
  return timelstm::cell_step(trunk.cell, x, dt, prev);
}

namespace {

std::vector<CellState> run_trunk(const TrunkVars& trunk, const SequenceBatch& batch, std::size_t steps) {
  Tape& tape = *trunk.embedding.tape;
  std::vector<timelstm::StepInput> inputs;
  inputs.reserve(steps);
  for (std::size_t m = 0; m < steps; ++m) {
    inputs.push_back({diff::gather_rows(trunk.embedding, batch.types[m]), tape.constant(batch.intervals[m])});
  }
  return timelstm::unroll(trunk.cell, inputs, timelstm::zero_state(tape, batch.batch, trunk.cell.hidden_dim));
}

}  // namespace

std::vector<CellState> trunk_states(const TrunkVars& trunk, const SequenceBatch& batch) {
  return run_trunk(trunk, batch, batch.length);
}

PolicyHeads policy_heads(const GeneratorVars& g, const CellState& state) {
  Var s = timelstm::state_features(state);
  Var logits = affine(s, g.W_type, g.b_type);
  Var interval = affine(s, g.W_interval, g.b_interval);
  return PolicyHeads{logits, diff::column(interval, 0), diff::clamp(diff::column(interval, 1), kLogVarMin, kLogVarMax)};
}

PolicyOutput policy_row(const PolicyHeads& heads, std::size_t row) {
  PolicyOutput out;
  const Tensor& z = heads.logits.value();
  const auto& mask = sampling_mask();
  for (std::size_t k = 0; k < kNumEventTypes; ++k) {
    out.logits[k] = mask[k] ? z.at(row, k) : -std::numeric_limits<double>::infinity();
  }
  out.mu = heads.mu.value()[row];
  out.sigma2 = std::exp(heads.logvar.value()[row]);
  return out;
}

PolicyOutput policy_step(const GeneratorVars& g, const CellState& state, std::size_t row) {
  return policy_row(policy_heads(g, state), row);
}

std::vector<Var> step_log_likelihoods(const GeneratorVars& g, const SequenceBatch& batch) {
  if (batch.length < 2) throw ContractError("step_log_likelihoods: need at least two steps");
  Tape& tape = *g.W_type.tape;
  auto states = run_trunk(g.trunk, batch, batch.length - 1);
  std::vector<Var> out;
  out.reserve(states.size());
  for (std::size_t m = 0; m + 1 < batch.length; ++m) {
    PolicyHeads heads = policy_heads(g, states[m]);
    Var log_cat = diff::log_softmax_pick(heads.logits, batch.types[m + 1], sampling_mask());
    Var diffv = diff::sub(tape.constant(batch.intervals[m + 1]), heads.mu);
    Var quad = diff::mul(diff::square(diffv), diff::exp(diff::scale(heads.logvar, -1.0)));
    Var log_norm = diff::add_scalar(diff::scale(diff::add(quad, heads.logvar), -0.5), -kHalfLog2Pi);
    out.push_back(diff::add(log_cat, log_norm));
  }
  return out;
}

ScorerForward discriminator_forward(const ScorerVars& d, const SequenceBatch& batch) {
  auto states = trunk_states(d.trunk, batch);
  Var features = timelstm::state_features(states.back());
  return ScorerForward{affine(features, d.W_out, d.b_out), features};
}

std::vector<Var> critic_forward(const ScorerVars& c, const SequenceBatch& batch) {
  auto states = trunk_states(c.trunk, batch);
  std::vector<Var> values;
  values.reserve(states.size());
  for (const auto& s : states) values.push_back(diff::sigmoid(affine(timelstm::state_features(s), c.W_out, c.b_out)));
  return values;
}

// --- Inference ----------------------------------------------------------------------

std::pair<EventType, double> sample_action(const PolicyOutput& policy, Rng& rng) {
  const auto probs = policy.probabilities();
  const auto k = static_cast<EventType>(rng.categorical(probs));
  const double draw = policy.mu + std::sqrt(policy.sigma2) * rng.normal();
  return {k, std::max(0.0, draw)};
}

Rollout generate_batch(const GeneratorParams& g, std::size_t n, std::size_t length, Rng& rng, IntervalActivation act) {
  if (n == 0) throw ContractError("generate_batch: n must be positive");
  if (length < 2) throw ContractError("generate_batch: length must be at least 2");
  Rollout out;
  out.sequences.reserve(n);
  out.step_log_probs.reserve(n);
  for (std::size_t start = 0; start < n; start += kGenerationChunk) {
    const std::size_t rows = std::min(kGenerationChunk, n - start);
    std::vector<Sequence> seqs(rows);
    std::vector<std::vector<double>> logp(rows, std::vector<double>(length - 1));
    for (auto& s : seqs) {
      s.events.reserve(length);
      s.events.push_back({EventType::kIni, 0.0});
    }
    InferenceTrunk trunk(g.trunk, act, rows);
    std::vector<std::size_t> types(rows, index(EventType::kIni));
    Tensor intervals = Tensor::matrix(rows, 1);
    for (std::size_t m = 0; m + 1 < length; ++m) {
      Tape tape;
      CellState state = trunk.step(tape, types, intervals);
      GeneratorVars vars = GeneratorVars::bind(tape, g, false, "", act);
      PolicyHeads heads = policy_heads(vars, state);
      for (std::size_t r = 0; r < rows; ++r) {
        PolicyOutput policy = policy_row(heads, r);
        auto [type, dt] = sample_action(policy, rng);
        seqs[r].events.push_back({type, dt});
        logp[r][m] = masked_log_softmax(policy.logits, index(type)) +
                     gaussian_log_pdf(dt, policy.mu, heads.logvar.value()[r]);
        types[r] = index(type);
        intervals[r] = dt;
      }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      out.sequences.push_back(std::move(seqs[r]));
      out.step_log_probs.push_back(std::move(logp[r]));
    }
  }
  return out;
}

Discrimination discriminate(const DiscriminatorParams& d, const std::vector<Sequence>& seqs, std::size_t length,
                            IntervalActivation act) {
  if (seqs.empty()) throw ContractError("discriminate: empty batch");
  Discrimination out;
  out.probability.reserve(seqs.size());
  const std::size_t width = 2 * d.trunk.cell.hidden_dim;
  out.hidden = Tensor::matrix(seqs.size(), width);
  std::size_t offset = 0;
  for (const auto& chunk : chunks(seqs, kGenerationChunk)) {
    SequenceBatch batch = SequenceBatch::from(chunk, length);
    InferenceTrunk trunk(d.trunk, act, batch.batch);
    for (std::size_t m = 0; m < length; ++m) {
      Tape tape;
      CellState s = trunk.step(tape, batch.types[m], batch.intervals[m]);
      if (m + 1 < length) continue;
      ScorerVars vars = ScorerVars::bind(tape, d, false, "", act);
      Var features = timelstm::state_features(s);
      Var prob = diff::sigmoid(affine(features, vars.W_out, vars.b_out));
      for (std::size_t r = 0; r < batch.batch; ++r) {
        out.probability.push_back(prob.value()[r]);
        std::copy_n(features.value().data().begin() + r * width, width,
                    out.hidden.data().begin() + (offset + r) * width);
      }
    }
    offset += batch.batch;
  }
  return out;
}

std::vector<std::vector<double>> critic_values(const CriticParams& c, const std::vector<Sequence>& seqs,
                                               std::size_t length, IntervalActivation act) {
  if (seqs.empty()) throw ContractError("critic_values: empty batch");
  std::vector<std::vector<double>> out;
  out.reserve(seqs.size());
  for (const auto& chunk : chunks(seqs, kGenerationChunk)) {
    SequenceBatch batch = SequenceBatch::from(chunk, length);
    std::vector<std::vector<double>> vals(batch.batch, std::vector<double>(length));
    InferenceTrunk trunk(c.trunk, act, batch.batch);
    for (std::size_t m = 0; m < length; ++m) {
      Tape tape;
      CellState s = trunk.step(tape, batch.types[m], batch.intervals[m]);
      ScorerVars vars = ScorerVars::bind(tape, c, false, "", act);
      Var v = diff::sigmoid(affine(timelstm::state_features(s), vars.W_out, vars.b_out));
      for (std::size_t r = 0; r < batch.batch; ++r) vals[r][m] = v.value()[r];
    }
    for (auto& v : vals) out.push_back(std::move(v));
  }
  return out;
}

}  // namespace tseqgan::nets
