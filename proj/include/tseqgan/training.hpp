#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tseqgan/nets.hpp"
#include "tseqgan/rng.hpp"
#include "tseqgan/sequence.hpp"

namespace tseqgan::train {

using nets::CriticParams;
using nets::DiscriminatorParams;
using nets::GeneratorParams;

inline constexpr const char* kEngineVersion = "tseqgan-0.1.0";

enum class BestMetric { kRbq, kFidh };

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t length = kDefaultLength;
  std::size_t batch = 64;
  double lr = 1e-4;
  // Per-phase overrides; unset phases use lr.
  std::optional<double> lr_mle;
  std::optional<double> lr_disc_pretrain;
  std::optional<double> lr_adv;
  // Global-norm clip per network and update; 0 disables.
  double grad_clip_pretrain = 0.0;
  double grad_clip_adv = 5.0;
  std::size_t pretrain_g_steps = 2400;
  std::size_t pretrain_d_steps = 2000;
  std::size_t adversarial_steps = 3000;
  std::size_t g_steps = 1;
  std::size_t d_steps = 1;
  std::size_t eval_every = 50;
  std::size_t eval_batch = 64;
  std::size_t checkpoint_every = 500;
  double collapse_factor = 5.0;
  std::size_t collapse_window = 10;
  BestMetric best_metric = BestMetric::kRbq;
  double holdout_fraction = 0.0;  // tail of each split kept out of pre-training
  // Multiplies the adversarial learning rate after this many adversarial
  // steps (0 = never). Used to provoke collapse on purpose.
  std::size_t destabilize_after = 0;
  double destabilize_factor = 100.0;
  nets::NetConfig net;

  double mle_lr() const { return lr_mle.value_or(lr); }
  double disc_pretrain_lr() const { return lr_disc_pretrain.value_or(lr); }
  double adv_lr(std::size_t adv_step) const;

  /// Throws ContractError on a non-positive count or rate.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

const char* to_string(BestMetric m);
BestMetric parse_best_metric(const std::string& s);

struct HistoryRow {
  std::size_t step = 0;
  double rbq = 0, mad = 0, fid = 0, mmd = 0, fidh = 0;
  bool operator==(const HistoryRow&) const = default;
};

std::string history_csv(const std::vector<HistoryRow>& rows);

struct BestSnapshot {
  std::size_t step = 0;
  HistoryRow metrics;
  GeneratorParams gen;
  DiscriminatorParams disc;
  CriticParams critic;
};

enum class Phase { kMle, kDiscPretrain, kAdversarial, kDone };
const char* to_string(Phase p);
Phase parse_phase(const std::string& s);

/// Everything needed to continue a run bit-for-bit.
struct TrainState {
  TrainConfig config;
  Phase phase = Phase::kMle;
  GeneratorParams gen;
  DiscriminatorParams disc;
  CriticParams critic;
  Rng rng;       // batches and rollouts
  Rng eval_rng;  // evaluation batches only
  std::size_t mle_steps = 0;
  std::size_t disc_steps = 0;
  std::size_t adv_steps = 0;
  std::vector<double> mle_loss;
  std::vector<double> disc_loss;
  std::vector<HistoryRow> history;
  std::optional<BestSnapshot> best;
  std::string stop_reason;  // "", "completed" or "collapse"
  std::optional<double> holdout_auc;

  std::size_t global_step() const { return mle_steps + disc_steps + adv_steps; }
};

/// Seeds the three networks and both random streams from config.seed.
TrainState init_state(const TrainConfig& cfg);

struct TrainingData {
  const std::vector<Sequence>* positive = nullptr;
  const std::vector<Sequence>* negative = nullptr;
};

// --- Single steps -------------------------------------------------------------

/// Teacher-forced MLE on a batch: mean over rows and steps of the negative
/// log-likelihood (type cross-entropy plus interval Gaussian NLL).
double mle_loss(const GeneratorParams& g, const std::vector<const Sequence*>& batch, std::size_t length,
                diff::GradientMap* grads = nullptr, nets::IntervalActivation act = nets::IntervalActivation::kSigmoid);

/// Mean BCE of D on sequences with labels (1 = real).
double disc_loss(const DiscriminatorParams& d, const std::vector<const Sequence*>& batch,
                 const std::vector<double>& labels, std::size_t length, diff::GradientMap* grads = nullptr,
                 nets::IntervalActivation act = nets::IntervalActivation::kSigmoid);

struct GStepStats {
  double mean_reward = 0;
  double mean_abs_advantage = 0;
  double critic_loss = 0;
  double gen_loss = 0;
};

/// Rewards and values for a generated batch, and the actor-critic gradients.
/// Values are read before any update and enter the generator loss as
/// constants.
struct PolicyGradient {
  diff::GradientMap gen_grads;
  diff::GradientMap critic_grads;
  GStepStats stats;
};
PolicyGradient policy_gradient(const GeneratorParams& g, const CriticParams& c, const std::vector<Sequence>& seqs,
                               const std::vector<double>& rewards, std::size_t length,
                               nets::IntervalActivation act = nets::IntervalActivation::kSigmoid);

/// Samples `batch` sequences, scores them with D and applies both updates
/// (critic first, then generator).
GStepStats g_step(GeneratorParams& g, CriticParams& c, const DiscriminatorParams& d, const TrainConfig& cfg, double lr,
                  Rng& rng);

struct DStepStats {
  double loss = 0;
  std::size_t n_true = 0;
  std::size_t n_fake = 0;
};

/// `batch` fresh fakes (label 0) and `batch` draws from Ω⁺ (label 1).
DStepStats d_step(DiscriminatorParams& d, const GeneratorParams& g, const std::vector<Sequence>& positive,
                  const TrainConfig& cfg, double lr, Rng& rng);

/// SGD with optional global-norm clipping. Parameters are left untouched and
/// NumericError is thrown if the gradients or the updated values are not
/// finite.
void apply_update(diff::ParamRefs params, diff::GradientMap grads, double lr, double clip, const char* what);

// --- Loop ------------------------------------------------------------------------

enum class Event {
  kInit,          // before the first MLE step
  kMleDone,       // generator pre-training finished
  kPretrainDone,  // discriminator pre-training finished
  kPeriodic,      // every checkpoint_every global steps
  kEval,          // after an evaluation row was appended
  kBest,          // best snapshot replaced
  kCollapse,      // stopped on an FID surge
  kDone,          // run finished
};
const char* to_string(Event e);

struct Hooks {
  std::function<void(const TrainState&, Event)> on_event;
  std::function<void(const std::string&)> log;
};

/// Mann-Whitney AUC of scores for positives against negatives.
double roc_auc(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores);

/// Evaluates G on a fresh eval batch against an Ω⁺ batch of the same size.
HistoryRow evaluate_generator(const TrainState& s, const std::vector<Sequence>& positive, Rng& rng);

/// True when `fid` exceeds factor x the median FID of the last `window`
/// history rows (needs a full window).
bool fid_surge(const std::vector<HistoryRow>& history, double fid, double factor, std::size_t window);

/// Runs (or continues) every phase up to the configured step counts.
void run(TrainState& s, const TrainingData& data, const Hooks& hooks = {});

}  // namespace tseqgan::train
