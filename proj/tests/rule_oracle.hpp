#pragma once

// Deliberately naive second implementation of the rule engine, used as an
// oracle for the production code.

#include <array>
#include <vector>

#include "tseqgan/rng.hpp"
#include "tseqgan/sequence.hpp"

namespace oracle {

using tseqgan::EventType;
using tseqgan::Sequence;

inline double time_at(const Sequence& s, std::size_t m) {
  double t = 0;
  for (std::size_t j = 0; j <= m; ++j) t += s[j].dt;
  return t;
}

inline std::array<bool, 6> rules(const Sequence& s) {
  const std::size_t n = s.size();
  auto count = [&](EventType k) {
    int c = 0;
    for (std::size_t m = 1; m < n; ++m) c += s[m].type == k;
    return c;
  };
  std::array<bool, 6> r{};
  r[0] = s[1].type == EventType::kA;
  int distinct = 0;
  for (auto k : {EventType::kA, EventType::kB, EventType::kC, EventType::kD}) distinct += count(k) > 0;
  r[1] = distinct > 3 && count(EventType::kA) > 0;

  // For each d, walk back to the closest c that no earlier d has claimed.
  std::vector<int> partner(n, -1);
  bool all_matched = true;
  for (std::size_t m = 1; m < n; ++m) {
    if (s[m].type != EventType::kD) continue;
    bool found = false;
    for (std::size_t j = m; j-- > 1;) {
      if (s[j].type == EventType::kC && partner[j] < 0) {
        partner[j] = static_cast<int>(m);
        partner[m] = static_cast<int>(j);
        found = true;
        break;
      }
    }
    all_matched = all_matched && found;
  }
  r[2] = all_matched;
  r[3] = count(EventType::kA) >= count(EventType::kB) && count(EventType::kB) >= count(EventType::kC) &&
         count(EventType::kC) >= count(EventType::kD);

  bool spaced = true;
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (s[j].type != s[i].type) continue;
      bool between = false;
      for (std::size_t k = i + 1; k < j; ++k) between = between || s[k].type == s[i].type;
      if (!between && time_at(s, j) - time_at(s, i) < 10) spaced = false;
    }
  r[4] = spaced;

  bool close = true;
  for (std::size_t m = 1; m < n; ++m)
    if (s[m].type == EventType::kD && partner[m] >= 0)
      close = close && time_at(s, m) - time_at(s, static_cast<std::size_t>(partner[m])) <= 50;
  r[5] = close;
  return r;
}

inline long long rbq_by_enumeration(const std::array<bool, 6>& r) {
  long long total = 0;
  for (unsigned subset = 1; subset < 64; ++subset) {
    bool all = true;
    int size = 0;
    for (int b = 0; b < 6; ++b)
      if (subset & (1u << b)) {
        all = all && r[b];
        ++size;
      }
    if (all) total += 1LL << size;
  }
  return total;
}

// Mix of draws skewed towards rule-satisfying shapes: a-heavy types and
// intervals spanning both sides of the 10 and 50 thresholds.
inline Sequence stress_sequence(tseqgan::Rng& rng, std::size_t length = 21) {
  Sequence s;
  s.events.push_back({EventType::kIni, 0.0});
  const bool skewed = rng.uniform() < 0.5;
  for (std::size_t m = 1; m < length; ++m) {
    std::size_t k;
    if (skewed) {
      const double u = rng.uniform();
      k = u < 0.4 ? 0 : u < 0.65 ? 1 : u < 0.85 ? 2 : 3;
      if (m == 1 && rng.uniform() < 0.7) k = 0;
    } else {
      k = rng.below(4);
    }
    const double dt = rng.uniform() < 0.1 ? std::floor(rng.uniform() * 15) : 30 * rng.uniform();
    s.events.push_back({static_cast<EventType>(k), dt});
  }
  return s;
}

}  // namespace oracle
