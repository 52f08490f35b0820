#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tseqgan/rng.hpp"
#include "tseqgan/sequence.hpp"
#include "tseqgan/timelstm.hpp"

namespace tseqgan::nets {

using diff::Tape;
using diff::Tensor;
using diff::Var;
using timelstm::CellParams;
using timelstm::CellState;
using timelstm::CellVars;
using timelstm::IntervalActivation;

inline constexpr double kLogVarMin = -8.0;
inline constexpr double kLogVarMax = 8.0;

struct NetConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  double init_stddev = 0.1;
  double forget_bias = 1.0;
  IntervalActivation interval_activation = IntervalActivation::kSigmoid;
};

/// Column-major view of a batch of equal-length sequences.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::vector<std::size_t>> types;  // [step][row]
  std::vector<Tensor> intervals;                // [step] -> batch x 1

  /// Throws ContractError unless every sequence is valid with this length.
  static SequenceBatch from(const std::vector<Sequence>& seqs, std::size_t length = kDefaultLength);
  static SequenceBatch from(const std::vector<const Sequence*>& seqs, std::size_t length = kDefaultLength);
};

/// Embedding + Time-LSTM cell trunk shared by all three network layouts.
struct Trunk {
  Tensor embedding;  // |K| x E
  CellParams cell;
};

/// Hybrid policy network: categorical head over event types and a Gaussian
/// head (mean, log-variance) for the next interval, both reading S_m.
struct GeneratorParams {
  Trunk trunk;
  Tensor W_type;      // 2H x |K|
  Tensor b_type;      // |K|
  Tensor W_interval;  // 2H x 2
  Tensor b_interval;  // 2

  static GeneratorParams zeros(const NetConfig& cfg);
  static GeneratorParams random(const NetConfig& cfg, Rng& rng);
  diff::ParamRefs refs(const std::string& prefix = "gen.");
  diff::ConstParamRefs refs(const std::string& prefix = "gen.") const;
};

/// Sequence scorer with a single sigmoid output. Used for the discriminator
/// (applied to the last state) and the critic (applied to every state).
struct ScorerParams {
  Trunk trunk;
  Tensor W_out;  // 2H x 1
  Tensor b_out;  // 1

  diff::ParamRefs refs(const std::string& prefix);
  diff::ConstParamRefs refs(const std::string& prefix) const;
};

struct DiscriminatorParams : ScorerParams {
  static DiscriminatorParams zeros(const NetConfig& cfg);
  static DiscriminatorParams random(const NetConfig& cfg, Rng& rng);
  diff::ParamRefs refs(const std::string& prefix = "disc.") { return ScorerParams::refs(prefix); }
  diff::ConstParamRefs refs(const std::string& prefix = "disc.") const { return ScorerParams::refs(prefix); }
};

struct CriticParams : ScorerParams {
  static CriticParams zeros(const NetConfig& cfg);
  static CriticParams random(const NetConfig& cfg, Rng& rng);
  diff::ParamRefs refs(const std::string& prefix = "critic.") { return ScorerParams::refs(prefix); }
  diff::ConstParamRefs refs(const std::string& prefix = "critic.") const { return ScorerParams::refs(prefix); }
};

/// Per-sequence policy at one step. PAD and INI logits are -inf.
struct PolicyOutput {
  std::array<double, kNumEventTypes> logits{};
  double mu = 0.0;
  double sigma2 = 1.0;

  std::array<double, kNumEventTypes> probabilities() const;
};

/// Columns the categorical head may emit (a, b, c, d).
const std::vector<bool>& sampling_mask();

// --- Tape-level building blocks --------------------------------------------

struct TrunkVars {
  Var embedding;
  CellVars cell;
};

struct GeneratorVars {
  TrunkVars trunk;
  Var W_type, b_type, W_interval, b_interval;

  static GeneratorVars bind(Tape& tape, const GeneratorParams& p, bool trainable, const std::string& prefix = "gen.",
                            IntervalActivation act = IntervalActivation::kSigmoid);
};

struct ScorerVars {
  TrunkVars trunk;
  Var W_out, b_out;

  static ScorerVars bind(Tape& tape, const ScorerParams& p, bool trainable, const std::string& prefix,
                         IntervalActivation act = IntervalActivation::kSigmoid);
};

struct PolicyHeads {
  Var logits;  // batch x |K|, unmasked
  Var mu;      // batch x 1
  Var logvar;  // batch x 1, clamped to [kLogVarMin, kLogVarMax]
};

/// Feeds step m of the batch through the trunk.
CellState trunk_step(const TrunkVars& trunk, const std::vector<std::size_t>& types, const Tensor& intervals,
                     const CellState& prev);

/// Runs the trunk over every step and returns all states.
std::vector<CellState> trunk_states(const TrunkVars& trunk, const SequenceBatch& batch);

PolicyHeads policy_heads(const GeneratorVars& g, const CellState& state);

/// Reads row `row` of evaluated heads into a PolicyOutput (mask applied).
PolicyOutput policy_row(const PolicyHeads& heads, std::size_t row);

/// Teacher-forced per-step log-likelihoods: entry m (m = 0 .. L-2) is the
/// batch x 1 value log Cat(x_{m+1} | S_m) + log N(dt_{m+1} | mu, sigma^2).
std::vector<Var> step_log_likelihoods(const GeneratorVars& g, const SequenceBatch& batch);

/// Discriminator logits (batch x 1) and final features [T_L ; h_L] (batch x 2H).
struct ScorerForward {
  Var logits;
  Var features;
};
ScorerForward discriminator_forward(const ScorerVars& d, const SequenceBatch& batch);

/// Critic values V(S_m) for every step, each batch x 1 in (0, 1).
std::vector<Var> critic_forward(const ScorerVars& c, const SequenceBatch& batch);

// --- Inference --------------------------------------------------------------

/// Forms S_m from a generator state and applies both heads; returns the
/// policy for one row of the batch.
PolicyOutput policy_step(const GeneratorVars& g, const CellState& state, std::size_t row = 0);

/// Event type from the categorical, interval from N(mu, sigma2) rectified at 0.
std::pair<EventType, double> sample_action(const PolicyOutput& policy, Rng& rng);

struct Rollout {
  std::vector<Sequence> sequences;
  /// Per-sequence log-likelihood of each sampled step (L-1 entries).
  std::vector<std::vector<double>> step_log_probs;
};

/// Sequences sampled in chunks of this many rows; the random stream is
/// consumed chunk by chunk, step by step, row by row.
inline constexpr std::size_t kGenerationChunk = 512;

/// Samples n sequences of the given length, each starting with (INI, 0).
Rollout generate_batch(const GeneratorParams& g, std::size_t n, std::size_t length, Rng& rng,
                       IntervalActivation act = IntervalActivation::kSigmoid);

struct Discrimination {
  std::vector<double> probability;
  Tensor hidden;  // n x 2H final [T_L ; h_L]
};

/// D(A) for every sequence; throws ContractError on a wrong length.
Discrimination discriminate(const DiscriminatorParams& d, const std::vector<Sequence>& seqs,
                            std::size_t length = kDefaultLength, IntervalActivation act = IntervalActivation::kSigmoid);

/// V(S_m), m = 0 .. L-1, for every sequence.
std::vector<std::vector<double>> critic_values(const CriticParams& c, const std::vector<Sequence>& seqs,
                                               std::size_t length = kDefaultLength,
                                               IntervalActivation act = IntervalActivation::kSigmoid);

}  // namespace tseqgan::nets
