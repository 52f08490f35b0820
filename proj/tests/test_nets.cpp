#include <cmath>
#include <memory>
#include <set>

#include <doctest.h>

#include "fd_check.hpp"
#include "tseqgan/error.hpp"
#include "tseqgan/nets.hpp"

using namespace tseqgan;
using namespace tseqgan::nets;
using fdcheck::Params;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.embed_dim = 3;
  c.hidden_dim = 4;
  c.init_stddev = 0.3;
  return c;
}

Sequence random_sequence(Rng& rng, std::size_t length) {
  Sequence s;
  s.events.push_back({EventType::kIni, 0.0});
  for (std::size_t m = 1; m < length; ++m)
    s.events.push_back({static_cast<EventType>(rng.below(4)), 4.0 * std::abs(rng.normal())});
  return s;
}

std::vector<Sequence> random_sequences(std::size_t n, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sequence> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_sequence(rng, length));
  return out;
}

template <typename P>
Params to_params(const P& p) {
  Params out;
  for (const auto& [name, t] : p.refs()) out[name] = *t;
  return out;
}

template <typename P>
P from_params(const Params& m, const NetConfig& cfg) {
  P p = P::zeros(cfg);
  for (auto& [name, t] : p.refs()) *t = m.at(name);
  return p;
}

}  // namespace

TEST_CASE("zero heads give a uniform categorical and a standard normal") {
  NetConfig cfg = small_config();
  Rng rng(1);
  GeneratorParams g = GeneratorParams::random(cfg, rng);
  g.W_type.fill(0.0);
  g.W_interval.fill(0.0);
  Tape tape;
  GeneratorVars v = GeneratorVars::bind(tape, g, false);
  PolicyOutput p = policy_step(v, timelstm::zero_state(tape, 1, cfg.hidden_dim));
  auto probs = p.probabilities();
  for (std::size_t k = 0; k < 4; ++k) CHECK(probs[k] == doctest::Approx(0.25));
  CHECK(probs[index(EventType::kPad)] == 0.0);
  CHECK(probs[index(EventType::kIni)] == 0.0);
  CHECK(p.mu == 0.0);
  CHECK(p.sigma2 == doctest::Approx(1.0));
}

TEST_CASE("log-variance is clamped") {
  NetConfig cfg = small_config();
  GeneratorParams g = GeneratorParams::zeros(cfg);
  g.b_interval[1] = 50.0;
  Tape tape;
  PolicyOutput p = policy_step(GeneratorVars::bind(tape, g, false), timelstm::zero_state(tape, 1, cfg.hidden_dim));
  CHECK(p.sigma2 == doctest::Approx(std::exp(kLogVarMax)));
}

TEST_CASE("parameter names are unique per network") {
  NetConfig cfg;
  Rng rng(2);
  auto g = GeneratorParams::random(cfg, rng);
  auto d = DiscriminatorParams::random(cfg, rng);
  auto c = CriticParams::random(cfg, rng);
  std::set<std::string> names;
  std::size_t count = 0;
  for (const auto& [n, t] : g.refs()) names.insert(n), ++count;
  for (const auto& [n, t] : d.refs()) names.insert(n), ++count;
  for (const auto& [n, t] : c.refs()) names.insert(n), ++count;
  CHECK(names.size() == count);
  CHECK(g.trunk.embedding.rows() == kNumEventTypes);
  CHECK(g.W_type.rows() == 2 * cfg.hidden_dim);
}

TEST_CASE("finite differences of the teacher-forced likelihood") {
  NetConfig cfg = small_config();
  Rng rng(3);
  Params p = to_params(GeneratorParams::random(cfg, rng));
  auto seqs = random_sequences(3, 21, 4);
  SequenceBatch batch = SequenceBatch::from(seqs, 21);
  auto loss = [&](Tape& tape, const Params& m) {
    GeneratorParams g = from_params<GeneratorParams>(m, cfg);
    auto ll = step_log_likelihoods(GeneratorVars::bind(tape, g, true), batch);
    CHECK(ll.size() == 20);
    Var total = diff::sum(ll[0]);
    for (std::size_t i = 1; i < ll.size(); ++i) total = diff::add(total, diff::sum(ll[i]));
    return total;
  };
  auto r = fdcheck::check(loss, p);
  CHECK(r.worst_rel < 1e-5);
}

TEST_CASE("finite differences of discriminator and critic losses") {
  NetConfig cfg = small_config();
  Rng rng(5);
  auto seqs = random_sequences(4, 21, 6);
  SequenceBatch batch = SequenceBatch::from(seqs, 21);
  Params dp = to_params(DiscriminatorParams::random(cfg, rng));
  auto dloss = [&](Tape& tape, const Params& m) {
    auto d = from_params<DiscriminatorParams>(m, cfg);
    auto fwd = discriminator_forward(ScorerVars::bind(tape, d, true, "disc."), batch);
    return diff::mean(diff::bce_with_logits(fwd.logits, Tensor::matrix({{1}, {0}, {1}, {0}})));
  };
  CHECK(fdcheck::check(dloss, dp).worst_rel < 1e-5);

  Params cp = to_params(CriticParams::random(cfg, rng));
  auto closs = [&](Tape& tape, const Params& m) {
    auto c = from_params<CriticParams>(m, cfg);
    auto values = critic_forward(ScorerVars::bind(tape, c, true, "critic."), batch);
    CHECK(values.size() == 21);
    Var total = diff::mean(diff::square(diff::add_scalar(values[0], -0.3)));
    for (std::size_t i = 1; i < values.size(); ++i)
      total = diff::add(total, diff::mean(diff::square(diff::add_scalar(values[i], -0.3))));
    return total;
  };
  CHECK(fdcheck::check(closs, cp).worst_rel < 1e-5);
}

TEST_CASE("sampled log-probabilities match teacher forcing on the samples") {
  NetConfig cfg = small_config();
  Rng init(7);
  GeneratorParams g = GeneratorParams::random(cfg, init);
  Rng rng(8);
  Rollout roll = generate_batch(g, 600, 21, rng);
  REQUIRE(roll.sequences.size() == 600);
  for (const auto& s : roll.sequences) CHECK_NOTHROW(validate_sequence(s, 21));

  std::vector<Sequence> head(roll.sequences.begin() + 500, roll.sequences.begin() + 540);
  Tape tape;
  auto ll = step_log_likelihoods(GeneratorVars::bind(tape, g, false), SequenceBatch::from(head, 21));
  for (std::size_t r = 0; r < head.size(); ++r)
    for (std::size_t m = 0; m < 20; ++m)
      CHECK(ll[m].value()[r] == doctest::Approx(roll.step_log_probs[500 + r][m]).epsilon(1e-10));
}

TEST_CASE("generation is deterministic for a seed") {
  NetConfig cfg = small_config();
  Rng init(9);
  GeneratorParams g = GeneratorParams::random(cfg, init);
  Rng a(10), b(10), c(11);
  auto ra = generate_batch(g, 20, 21, a);
  auto rb = generate_batch(g, 20, 21, b);
  auto rc = generate_batch(g, 20, 21, c);
  CHECK(ra.sequences == rb.sequences);
  CHECK_FALSE(ra.sequences == rc.sequences);
  CHECK(a == b);
}

TEST_CASE("sampled intervals are rectified") {
  NetConfig cfg = small_config();
  GeneratorParams g = GeneratorParams::zeros(cfg);
  g.b_interval[0] = -1.0;  // mean below zero
  Rng rng(12);
  auto roll = generate_batch(g, 50, 21, rng);
  std::size_t zeros = 0;
  for (const auto& s : roll.sequences)
    for (std::size_t m = 1; m < s.size(); ++m) {
      CHECK(s[m].dt >= 0.0);
      zeros += s[m].dt == 0.0;
    }
  CHECK(zeros > 500);
}

TEST_CASE("batched inference matches the training graph") {
  NetConfig cfg = small_config();
  Rng rng(13);
  auto d = DiscriminatorParams::random(cfg, rng);
  auto c = CriticParams::random(cfg, rng);
  auto seqs = random_sequences(520, 21, 14);
  Discrimination out = discriminate(d, seqs);
  auto values = critic_values(c, seqs);
  REQUIRE(out.probability.size() == 520);
  CHECK(out.hidden.rows() == 520);
  CHECK(out.hidden.cols() == 2 * cfg.hidden_dim);

  std::vector<Sequence> tail(seqs.begin() + 510, seqs.end());
  Tape tape;
  auto fwd = discriminator_forward(ScorerVars::bind(tape, d, false, "disc."), SequenceBatch::from(tail));
  auto cv = critic_forward(ScorerVars::bind(tape, c, false, "critic."), SequenceBatch::from(tail));
  for (std::size_t r = 0; r < tail.size(); ++r) {
    const double p = 1.0 / (1.0 + std::exp(-fwd.logits.value()[r]));
    CHECK(out.probability[510 + r] == doctest::Approx(p).epsilon(1e-12));
    CHECK(out.hidden.at(510 + r, 3) == doctest::Approx(fwd.features.value().at(r, 3)).epsilon(1e-12));
    for (std::size_t m = 0; m < 21; ++m) CHECK(values[510 + r][m] == doctest::Approx(cv[m].value()[r]).epsilon(1e-12));
  }
}

TEST_CASE("batch contracts") {
  auto seqs = random_sequences(2, 21, 15);
  CHECK_THROWS_AS(SequenceBatch::from(seqs, 20), ContractError);
  seqs[1].events[0].type = EventType::kA;
  CHECK_THROWS_AS(SequenceBatch::from(seqs, 21), ContractError);
  std::vector<Sequence> none;
  CHECK_THROWS_AS(SequenceBatch::from(none, 21), ContractError);
  CHECK_THROWS_AS(generate_batch(GeneratorParams::zeros(small_config()), 0, 21, *std::make_unique<Rng>(1)),
                  ContractError);
}
