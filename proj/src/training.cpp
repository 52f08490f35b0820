#include "tseqgan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "tseqgan/error.hpp"
#include "tseqgan/metrics.hpp"
#include "tseqgan/optim.hpp"

namespace tseqgan::train {

using diff::Tensor;
using diff::Var;
using nlohmann::json;

// --- Config ---------------------------------------------------------------------

double TrainConfig::adv_lr(std::size_t adv_step) const {
  const double base = lr_adv.value_or(lr);
  return destabilize_after > 0 && adv_step >= destabilize_after ? base * destabilize_factor : base;
}

const char* to_string(BestMetric m) { return m == BestMetric::kRbq ? "rbq" : "fidh"; }

BestMetric parse_best_metric(const std::string& s) {
  if (s == "rbq") return BestMetric::kRbq;
  if (s == "fidh") return BestMetric::kFidh;
  throw ContractError("best_metric must be rbq or fidh, got '" + s + "'");
}

namespace {

const char* to_string(nets::IntervalActivation a) {
  return a == nets::IntervalActivation::kSigmoid ? "sigmoid" : "identity";
}

nets::IntervalActivation parse_activation(const std::string& s) {
  if (s == "sigmoid") return nets::IntervalActivation::kSigmoid;
  if (s == "identity") return nets::IntervalActivation::kIdentity;
  throw ContractError("interval_activation must be sigmoid or identity, got '" + s + "'");
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractError("config: " + msg);
}

}  // namespace

void TrainConfig::validate() const {
  require(length >= 2, "length must be at least 2");
  require(batch >= 2, "batch must be at least 2");
  require(lr > 0, "lr must be positive");
  for (const auto& o : {lr_mle, lr_disc_pretrain, lr_adv}) require(!o || *o > 0, "learning rates must be positive");
  require(grad_clip_pretrain >= 0 && grad_clip_adv >= 0, "gradient clips must be non-negative");
  require(g_steps >= 1 && d_steps >= 1, "g_steps and d_steps must be positive");
  require(eval_batch >= 2, "eval_batch must be at least 2");
  require(collapse_factor > 1, "collapse_factor must exceed 1");
  require(collapse_window >= 1, "collapse_window must be positive");
  require(holdout_fraction >= 0 && holdout_fraction < 1, "holdout_fraction must be in [0, 1)");
  require(destabilize_factor > 0, "destabilize_factor must be positive");
  require(net.embed_dim >= 1 && net.hidden_dim >= 1, "network widths must be positive");
  require(net.init_stddev >= 0, "init_stddev must be non-negative");
}

json TrainConfig::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"seed", seed},
              {"length", length},
              {"batch", batch},
              {"lr", lr},
              {"lr_mle", opt(lr_mle)},
              {"lr_disc_pretrain", opt(lr_disc_pretrain)},
              {"lr_adv", opt(lr_adv)},
              {"grad_clip_pretrain", grad_clip_pretrain},
              {"grad_clip_adv", grad_clip_adv},
              {"pretrain_g_steps", pretrain_g_steps},
              {"pretrain_d_steps", pretrain_d_steps},
              {"adversarial_steps", adversarial_steps},
              {"g_steps", g_steps},
              {"d_steps", d_steps},
              {"eval_every", eval_every},
              {"eval_batch", eval_batch},
              {"checkpoint_every", checkpoint_every},
              {"collapse_factor", collapse_factor},
              {"collapse_window", collapse_window},
              {"best_metric", to_string(best_metric)},
              {"holdout_fraction", holdout_fraction},
              {"destabilize_after", destabilize_after},
              {"destabilize_factor", destabilize_factor},
              {"embed_dim", net.embed_dim},
              {"hidden_dim", net.hidden_dim},
              {"init_stddev", net.init_stddev},
              {"forget_bias", net.forget_bias},
              {"interval_activation", to_string(net.interval_activation)}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  const json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw FormatError("unknown config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  auto get_opt = [&](const char* key, std::optional<double>& out) {
    if (j.contains(key)) out = j.at(key).is_null() ? std::nullopt : std::optional<double>(j.at(key).get<double>());
  };
  try {
    get("seed", c.seed);
    get("length", c.length);
    get("batch", c.batch);
    get("lr", c.lr);
    get_opt("lr_mle", c.lr_mle);
    get_opt("lr_disc_pretrain", c.lr_disc_pretrain);
    get_opt("lr_adv", c.lr_adv);
    get("grad_clip_pretrain", c.grad_clip_pretrain);
    get("grad_clip_adv", c.grad_clip_adv);
    get("pretrain_g_steps", c.pretrain_g_steps);
    get("pretrain_d_steps", c.pretrain_d_steps);
    get("adversarial_steps", c.adversarial_steps);
    get("g_steps", c.g_steps);
    get("d_steps", c.d_steps);
    get("eval_every", c.eval_every);
    get("eval_batch", c.eval_batch);
    get("checkpoint_every", c.checkpoint_every);
    get("collapse_factor", c.collapse_factor);
    get("collapse_window", c.collapse_window);
    if (j.contains("best_metric")) c.best_metric = parse_best_metric(j.at("best_metric").get<std::string>());
    get("holdout_fraction", c.holdout_fraction);
    get("destabilize_after", c.destabilize_after);
    get("destabilize_factor", c.destabilize_factor);
    get("embed_dim", c.net.embed_dim);
    get("hidden_dim", c.net.hidden_dim);
    get("init_stddev", c.net.init_stddev);
    get("forget_bias", c.net.forget_bias);
    if (j.contains("interval_activation"))
      c.net.interval_activation = parse_activation(j.at("interval_activation").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return c;
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "step,rbq,mad,fid,mmd,fidh\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.rbq, r.mad, r.fid, r.mmd, r.fidh);
    out += buf;
  }
  return out;
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::kMle: return "mle";
    case Phase::kDiscPretrain: return "disc_pretrain";
    case Phase::kAdversarial: return "adversarial";
    case Phase::kDone: return "done";
  }
  return "?";
}

Phase parse_phase(const std::string& s) {
  for (Phase p : {Phase::kMle, Phase::kDiscPretrain, Phase::kAdversarial, Phase::kDone})
    if (s == to_string(p)) return p;
  throw FormatError("unknown phase '" + s + "'");
}

const char* to_string(Event e) {
  switch (e) {
    case Event::kInit: return "init";
    case Event::kMleDone: return "mle_done";
    case Event::kPretrainDone: return "pretrain_done";
    case Event::kPeriodic: return "periodic";
    case Event::kEval: return "eval";
    case Event::kBest: return "best";
    case Event::kCollapse: return "collapse";
    case Event::kDone: return "done";
  }
  return "?";
}

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.config = cfg;
  Rng g = Rng::stream(cfg.seed, 1), d = Rng::stream(cfg.seed, 2), c = Rng::stream(cfg.seed, 3);
  s.gen = GeneratorParams::random(cfg.net, g);
  s.disc = DiscriminatorParams::random(cfg.net, d);
  s.critic = CriticParams::random(cfg.net, c);
  s.rng = Rng::stream(cfg.seed, 4);
  s.eval_rng = Rng::stream(cfg.seed, 5);
  return s;
}

// --- Steps ------------------------------------------------------------------------

double mle_loss(const GeneratorParams& g, const std::vector<const Sequence*>& batch, std::size_t length,
                diff::GradientMap* grads, nets::IntervalActivation act) {
  diff::Tape tape;
  const nets::SequenceBatch sb = nets::SequenceBatch::from(batch, length);
  auto ll = nets::step_log_likelihoods(nets::GeneratorVars::bind(tape, g, true, "gen.", act), sb);
  Var total = diff::sum(ll[0]);
  for (std::size_t m = 1; m < ll.size(); ++m) total = diff::add(total, diff::sum(ll[m]));
  Var loss = diff::scale(total, -1.0 / double(sb.batch * ll.size()));
  const double v = loss.value().item();
  if (!std::isfinite(v)) throw NumericError("mle loss is not finite");
  if (grads) *grads = tape.backward(loss);
  return v;
}

double disc_loss(const DiscriminatorParams& d, const std::vector<const Sequence*>& batch,
                 const std::vector<double>& labels, std::size_t length, diff::GradientMap* grads,
                 nets::IntervalActivation act) {
  if (labels.size() != batch.size()) throw DimensionError("disc_loss: one label per sequence required");
  diff::Tape tape;
  const nets::SequenceBatch sb = nets::SequenceBatch::from(batch, length);
  auto fwd = nets::discriminator_forward(nets::ScorerVars::bind(tape, d, true, "disc.", act), sb);
  Var loss = diff::mean(diff::bce_with_logits(fwd.logits, Tensor(std::vector<std::size_t>{labels.size(), 1}, labels)));
  const double v = loss.value().item();
  if (!std::isfinite(v)) throw NumericError("discriminator loss is not finite");
  if (grads) *grads = tape.backward(loss);
  return v;
}

PolicyGradient policy_gradient(const GeneratorParams& g, const CriticParams& c, const std::vector<Sequence>& seqs,
                               const std::vector<double>& rewards, std::size_t length, nets::IntervalActivation act) {
  if (rewards.size() != seqs.size()) throw DimensionError("policy_gradient: one reward per sequence required");
  const nets::SequenceBatch sb = nets::SequenceBatch::from(seqs, length);
  const std::size_t B = sb.batch, steps = length - 1;
  const Tensor r(std::vector<std::size_t>{B, 1}, rewards);
  PolicyGradient out;

  // Critic regression on the states that chose each action.
  std::vector<Tensor> advantage;
  {
    diff::Tape tape;
    auto values = nets::critic_forward(nets::ScorerVars::bind(tape, c, true, "critic.", act), sb);
    Var total;
    for (std::size_t m = 0; m < steps; ++m) {
      Var sq = diff::sum(diff::square(diff::sub(values[m], tape.constant(r))));
      total = m == 0 ? sq : diff::add(total, sq);
      Tensor adv(std::vector<std::size_t>{B, 1});
      for (std::size_t i = 0; i < B; ++i) adv[i] = rewards[i] - values[m].value()[i];
      advantage.push_back(std::move(adv));
    }
    Var loss = diff::scale(total, 1.0 / double(B * steps));
    out.stats.critic_loss = loss.value().item();
    out.critic_grads = tape.backward(loss);
  }

  {
    diff::Tape tape;
    auto ll = nets::step_log_likelihoods(nets::GeneratorVars::bind(tape, g, true, "gen.", act), sb);
    Var total;
    for (std::size_t m = 0; m < steps; ++m) {
      Var term = diff::sum(diff::mul(ll[m], tape.constant(advantage[m])));
      total = m == 0 ? term : diff::add(total, term);
    }
    Var loss = diff::scale(total, -1.0 / double(B));
    out.stats.gen_loss = loss.value().item();
    out.gen_grads = tape.backward(loss);
  }

  double rs = 0, as = 0;
  for (double v : rewards) rs += v;
  for (const auto& a : advantage)
    for (double v : a.values()) as += std::abs(v);
  out.stats.mean_reward = rs / double(B);
  out.stats.mean_abs_advantage = as / double(B * steps);
  return out;
}

void apply_update(diff::ParamRefs params, diff::GradientMap grads, double lr, double clip, const char* what) {
  for (const auto& [name, g] : grads)
    if (!g.all_finite()) throw NumericError(std::string(what) + ": non-finite gradient for " + name);
  if (clip > 0) diff::clip_global_norm(grads, clip);
  std::vector<Tensor> backup;
  backup.reserve(params.size());
  for (const auto& [name, t] : params) backup.push_back(*t);
  diff::sgd_step(params, grads, lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].second->all_finite()) {
      for (std::size_t j = 0; j < params.size(); ++j) *params[j].second = std::move(backup[j]);
      throw NumericError(std::string(what) + ": update produced non-finite " + params[i].first);
    }
  }
}

GStepStats g_step(GeneratorParams& g, CriticParams& c, const DiscriminatorParams& d, const TrainConfig& cfg, double lr,
                  Rng& rng) {
  const auto act = cfg.net.interval_activation;
  nets::Rollout roll = nets::generate_batch(g, cfg.batch, cfg.length, rng, act);
  const auto rewards = nets::discriminate(d, roll.sequences, cfg.length, act).probability;
  PolicyGradient pg = policy_gradient(g, c, roll.sequences, rewards, cfg.length, act);
  apply_update(c.refs(), std::move(pg.critic_grads), lr, cfg.grad_clip_adv, "critic");
  apply_update(g.refs(), std::move(pg.gen_grads), lr, cfg.grad_clip_adv, "generator");
  return pg.stats;
}

DStepStats d_step(DiscriminatorParams& d, const GeneratorParams& g, const std::vector<Sequence>& positive,
                  const TrainConfig& cfg, double lr, Rng& rng) {
  if (positive.empty()) throw ContractError("d_step: no positive sequences");
  const auto act = cfg.net.interval_activation;
  nets::Rollout fake = nets::generate_batch(g, cfg.batch, cfg.length, rng, act);
  std::vector<const Sequence*> batch;
  std::vector<double> labels;
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    batch.push_back(&positive[rng.below(positive.size())]);
    labels.push_back(1.0);
  }
  for (const auto& s : fake.sequences) {
    batch.push_back(&s);
    labels.push_back(0.0);
  }
  diff::GradientMap grads;
  DStepStats st;
  st.loss = disc_loss(d, batch, labels, cfg.length, &grads, act);
  st.n_true = cfg.batch;
  st.n_fake = fake.sequences.size();
  apply_update(d.refs(), std::move(grads), lr, cfg.grad_clip_adv, "discriminator");
  return st;
}

// --- Evaluation ---------------------------------------------------------------------

double roc_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw ContractError("roc_auc: both classes required");
  std::vector<std::pair<double, int>> all;
  for (double v : pos) all.emplace_back(v, 1);
  for (double v : neg) all.emplace_back(v, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum += avg_rank;
    i = j;
  }
  const double np = double(pos.size()), nn = double(neg.size());
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

HistoryRow evaluate_generator(const TrainState& s, const std::vector<Sequence>& positive, Rng& rng) {
  const TrainConfig& cfg = s.config;
  const auto act = cfg.net.interval_activation;
  auto gen = nets::generate_batch(s.gen, cfg.eval_batch, cfg.length, rng, act).sequences;
  std::vector<Sequence> truth;
  truth.reserve(cfg.eval_batch);
  for (std::size_t i = 0; i < cfg.eval_batch; ++i) truth.push_back(positive[rng.below(positive.size())]);
  HistoryRow row;
  row.step = s.adv_steps;
  row.rbq = metrics::rbq_mean(gen);
  row.mad = metrics::mad(gen, &truth);
  const auto fg = metrics::interval_features(gen), ft = metrics::interval_features(truth);
  row.fid = metrics::fid(fg, ft);
  row.mmd = metrics::mmd(fg, ft);
  row.fidh = metrics::fidh(s.disc, truth, gen, cfg.length, act);
  return row;
}

// --- Loop ---------------------------------------------------------------------------------

namespace {

std::size_t train_count(std::size_t n, double holdout) {
  const auto held = static_cast<std::size_t>(std::floor(double(n) * holdout));
  return std::max<std::size_t>(1, n - held);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

}  // namespace

bool fid_surge(const std::vector<HistoryRow>& history, double fid, double factor, std::size_t window) {
  if (window == 0 || history.size() < window) return false;
  std::vector<double> recent;
  for (std::size_t i = history.size() - window; i < history.size(); ++i) recent.push_back(history[i].fid);
  return fid > factor * median(std::move(recent));
}

void run(TrainState& s, const TrainingData& data, const Hooks& hooks) {
  const TrainConfig& cfg = s.config;
  cfg.validate();
  if (!data.positive || !data.negative || data.positive->empty() || data.negative->empty())
    throw ContractError("training needs non-empty positive and negative sets");
  const auto& pos = *data.positive;
  const auto& neg = *data.negative;
  const std::size_t n_pos = train_count(pos.size(), cfg.holdout_fraction);
  const std::size_t n_neg = train_count(neg.size(), cfg.holdout_fraction);
  const auto act = cfg.net.interval_activation;

  auto fire = [&](Event e) {
    if (hooks.on_event) hooks.on_event(s, e);
  };
  auto log = [&](const std::string& msg) {
    if (hooks.log) hooks.log(msg);
  };
  auto periodic = [&] {
    if (cfg.checkpoint_every > 0 && s.global_step() % cfg.checkpoint_every == 0) fire(Event::kPeriodic);
  };

  if (s.phase == Phase::kMle) {
    if (s.mle_steps == 0) fire(Event::kInit);
    while (s.mle_steps < cfg.pretrain_g_steps) {
      std::vector<const Sequence*> batch;
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        const std::size_t j = s.rng.below(n_pos + n_neg);
        batch.push_back(j < n_pos ? &pos[j] : &neg[j - n_pos]);
      }
      diff::GradientMap grads;
      const double loss = mle_loss(s.gen, batch, cfg.length, &grads, act);
      apply_update(s.gen.refs(), std::move(grads), cfg.mle_lr(), cfg.grad_clip_pretrain, "generator");
      s.mle_loss.push_back(loss);
      ++s.mle_steps;
      if (s.mle_steps % 100 == 0) log(fmt("mle step %zu loss %.6f", s.mle_steps, loss));
      periodic();
    }
    s.phase = Phase::kDiscPretrain;
    fire(Event::kMleDone);
  }

  if (s.phase == Phase::kDiscPretrain) {
    const std::size_t half = cfg.batch / 2;
    while (s.disc_steps < cfg.pretrain_d_steps) {
      std::vector<const Sequence*> batch;
      std::vector<double> labels;
      for (std::size_t i = 0; i < half; ++i) {
        batch.push_back(&pos[s.rng.below(n_pos)]);
        labels.push_back(1.0);
      }
      for (std::size_t i = 0; i < half; ++i) {
        batch.push_back(&neg[s.rng.below(n_neg)]);
        labels.push_back(0.0);
      }
      diff::GradientMap grads;
      const double loss = disc_loss(s.disc, batch, labels, cfg.length, &grads, act);
      apply_update(s.disc.refs(), std::move(grads), cfg.disc_pretrain_lr(), cfg.grad_clip_pretrain, "discriminator");
      s.disc_loss.push_back(loss);
      ++s.disc_steps;
      if (s.disc_steps % 100 == 0) log(fmt("disc step %zu bce %.6f", s.disc_steps, loss));
      periodic();
    }
    if (n_pos < pos.size() && n_neg < neg.size()) {
      std::vector<Sequence> hp(pos.begin() + static_cast<std::ptrdiff_t>(n_pos), pos.end());
      std::vector<Sequence> hn(neg.begin() + static_cast<std::ptrdiff_t>(n_neg), neg.end());
      s.holdout_auc = roc_auc(nets::discriminate(s.disc, hp, cfg.length, act).probability,
                              nets::discriminate(s.disc, hn, cfg.length, act).probability);
      log(fmt("discriminator holdout auc %.4f", *s.holdout_auc));
    }
    s.phase = Phase::kAdversarial;
    fire(Event::kPretrainDone);
  }

  auto evaluate = [&]() -> bool {
    HistoryRow row = evaluate_generator(s, pos, s.eval_rng);
    const bool collapsed = fid_surge(s.history, row.fid, cfg.collapse_factor, cfg.collapse_window);
    if (collapsed) log(fmt("collapse at step %zu: fid %.4f surged past %.1f x the recent median", s.adv_steps, row.fid,
                           cfg.collapse_factor));
    s.history.push_back(row);
    log(fmt("eval step %zu rbq %.3f mad %.3f fid %.3f mmd %.5f fidh %.4f", row.step, row.rbq, row.mad, row.fid, row.mmd,
            row.fidh));
    fire(Event::kEval);
    if (collapsed) {
      s.stop_reason = "collapse";
      s.phase = Phase::kDone;
      fire(Event::kCollapse);
      return false;
    }
    const bool better = !s.best || (cfg.best_metric == BestMetric::kRbq ? row.rbq > s.best->metrics.rbq
                                                                         : row.fidh < s.best->metrics.fidh);
    if (better) {
      s.best = BestSnapshot{s.adv_steps, row, s.gen, s.disc, s.critic};
      fire(Event::kBest);
    }
    return true;
  };

  if (s.phase == Phase::kAdversarial) {
    bool running = true;
    if (s.adv_steps == 0 && s.history.empty() && cfg.eval_every > 0) running = evaluate();
    while (running && s.adv_steps < cfg.adversarial_steps) {
      const double lr = cfg.adv_lr(s.adv_steps);
      GStepStats gs;
      DStepStats ds;
      for (std::size_t i = 0; i < cfg.g_steps; ++i) gs = g_step(s.gen, s.critic, s.disc, cfg, lr, s.rng);
      for (std::size_t i = 0; i < cfg.d_steps; ++i) ds = d_step(s.disc, s.gen, pos, cfg, lr, s.rng);
      ++s.adv_steps;
      if (s.adv_steps % 50 == 0)
        log(fmt("adv step %zu reward %.4f |adv| %.4f critic %.5f disc %.5f", s.adv_steps, gs.mean_reward,
                gs.mean_abs_advantage, gs.critic_loss, ds.loss));
      if (cfg.eval_every > 0 && s.adv_steps % cfg.eval_every == 0) running = evaluate();
      if (running) periodic();
    }
    if (s.phase == Phase::kAdversarial) {
      s.stop_reason = "completed";
      s.phase = Phase::kDone;
    }
    fire(Event::kDone);
  }
}

}  // namespace tseqgan::train
