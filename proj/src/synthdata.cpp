#include "tseqgan/synthdata.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "tseqgan/error.hpp"

namespace tseqgan::synth {

double sample_chi_square(int k, Rng& rng) {
  double s = 0.0;
  for (int i = 0; i < k; ++i) {
    const double z = rng.normal();
    s += z * z;
  }
  return s;
}

Sequence sample_sequence(Rng& rng, std::size_t length) {
  if (length < 1) throw ContractError("sample_sequence: length must be positive");
  Sequence s;
  s.events.reserve(length);
  s.events.push_back({EventType::kIni, 0.0});
  for (std::size_t m = 1; m < length; ++m) {
    const auto k = rng.below(kNumObservableTypes);
    s.events.push_back({static_cast<EventType>(k), sample_chi_square(kDegreesOfFreedom[k], rng)});
  }
  return s;
}

CdPairing pair_c_d(const Sequence& seq) {
  CdPairing out;
  std::vector<std::size_t> open;
  for (std::size_t m = 0; m < seq.size(); ++m) {
    if (seq[m].type == EventType::kC) {
      open.push_back(m);
    } else if (seq[m].type == EventType::kD) {
      if (open.empty()) {
        out.unmatched_d = true;
      } else {
        out.pairs.emplace_back(open.back(), m);
        open.pop_back();
      }
    }
  }
  return out;
}

std::int64_t rbq_from_count(int satisfied) {
  if (satisfied < 0 || satisfied > static_cast<int>(kNumRules)) throw ContractError("rbq: count out of range");
  std::int64_t p = 1;
  for (int i = 0; i < satisfied; ++i) p *= 3;
  return p - 1;
}

RuleReport make_report(const std::array<bool, kNumRules>& rules) {
  RuleReport r;
  r.rules = rules;
  r.satisfied = static_cast<int>(std::count(rules.begin(), rules.end(), true));
  r.positive = r.satisfied >= 4;
  r.rbq = rbq_from_count(r.satisfied);
  return r;
}

RuleReport check_rules(const Sequence& seq) {
  if (seq.size() < 2) throw ContractError("check_rules: sequence needs at least one event after INI");
  validate_sequence(seq, seq.size());
  const std::vector<double> t = timestamps(seq);

  std::array<std::size_t, kNumObservableTypes> counts{};
  std::array<double, kNumObservableTypes> last_time{};
  std::array<bool, kNumObservableTypes> seen{};
  bool spaced = true;
  for (std::size_t m = 1; m < seq.size(); ++m) {
    const std::size_t k = index(seq[m].type);
    if (seen[k] && t[m] - last_time[k] < 10.0) spaced = false;
    seen[k] = true;
    last_time[k] = t[m];
    ++counts[k];
  }
  const CdPairing pairing = pair_c_d(seq);

  std::array<bool, kNumRules> r{};
  r[0] = seq[1].type == EventType::kA;
  r[1] = std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  r[2] = !pairing.unmatched_d;
  r[3] = counts[0] >= counts[1] && counts[1] >= counts[2] && counts[2] >= counts[3];
  r[4] = spaced;
  r[5] = std::all_of(pairing.pairs.begin(), pairing.pairs.end(),
                     [&](const auto& p) { return t[p.second] - t[p.first] <= 50.0; });
  return make_report(r);
}

Dataset build_dataset(const BuildOptions& opts) {
  if (opts.n_target < 1) throw ContractError("build_dataset: n_target must be at least 1");
  if (opts.block_size < 1) throw ContractError("build_dataset: block_size must be at least 1");
  const auto label = [&](const Sequence& s) { return opts.labeler ? opts.labeler(s) : check_rules(s).positive; };

  Dataset ds;
  ds.positive.reserve(opts.n_target);
  ds.negative.reserve(opts.n_target);

  // Per-block (draws, positives) for the sliding acceptance window.
  std::deque<std::pair<std::size_t, std::size_t>> window;
  std::size_t win_draws = 0, win_pos = 0;

  const std::size_t blocks_per_round = 64;
  std::uint64_t next_block = 0;
  while (ds.positive.size() < opts.n_target || ds.negative.size() < opts.n_target) {
    std::vector<std::vector<Sequence>> seqs(blocks_per_round);
    std::vector<std::vector<char>> labels(blocks_per_round);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t b = 0; b < blocks_per_round; ++b) {
      Rng rng = Rng::stream(opts.seed, next_block + b);
      seqs[b].reserve(opts.block_size);
      labels[b].reserve(opts.block_size);
      for (std::size_t i = 0; i < opts.block_size; ++i) {
        seqs[b].push_back(sample_sequence(rng, opts.length));
        labels[b].push_back(label(seqs[b].back()) ? 1 : 0);
      }
    }
    next_block += blocks_per_round;

    for (std::size_t b = 0; b < blocks_per_round; ++b) {
      std::size_t pos_in_block = 0;
      for (std::size_t i = 0; i < opts.block_size; ++i) {
        if (ds.positive.size() >= opts.n_target && ds.negative.size() >= opts.n_target) break;
        ++ds.stats.attempts;
        if (labels[b][i]) {
          ++ds.stats.positive_seen;
          ++pos_in_block;
          if (ds.positive.size() < opts.n_target) ds.positive.push_back(std::move(seqs[b][i]));
        } else {
          ++ds.stats.negative_seen;
          if (ds.negative.size() < opts.n_target) ds.negative.push_back(std::move(seqs[b][i]));
        }
      }
      window.emplace_back(opts.block_size, pos_in_block);
      win_draws += opts.block_size;
      win_pos += pos_in_block;
      while (win_draws - window.front().first >= opts.starvation_window) {
        win_draws -= window.front().first;
        win_pos -= window.front().second;
        window.pop_front();
      }
      if (win_draws >= opts.starvation_window) {
        const double pos_rate = double(win_pos) / double(win_draws);
        const double neg_rate = double(win_draws - win_pos) / double(win_draws);
        const bool pos_starved = ds.positive.size() < opts.n_target && pos_rate < opts.min_acceptance;
        const bool neg_starved = ds.negative.size() < opts.n_target && neg_rate < opts.min_acceptance;
        if (pos_starved || neg_starved) {
          std::ostringstream msg;
          msg << "build_dataset: " << (pos_starved ? "positive" : "negative") << " class acceptance "
              << (pos_starved ? pos_rate : neg_rate) << " over the last " << win_draws << " draws is below "
              << opts.min_acceptance << " (have " << ds.positive.size() << " positive, " << ds.negative.size()
              << " negative of " << opts.n_target << ")";
          throw ContractError(msg.str());
        }
      }
      if (ds.positive.size() >= opts.n_target && ds.negative.size() >= opts.n_target) break;
    }
  }
  return ds;
}

}  // namespace tseqgan::synth
