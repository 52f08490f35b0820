#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tseqgan/rng.hpp"
#include "tseqgan/sequence.hpp"

namespace tseqgan::synth {

/// Bumped whenever rule semantics change; stored next to every dataset.
inline constexpr const char* kRuleEngineVersion = "rules-1";
inline constexpr std::size_t kNumRules = 6;

/// Chi-square degrees of freedom of the interval preceding each type.
inline constexpr std::array<int, kNumObservableTypes> kDegreesOfFreedom{8, 16, 24, 32};

/// Sum of k squared standard normals.
double sample_chi_square(int k, Rng& rng);

/// (INI, 0) followed by length-1 uniform types with chi-square intervals.
Sequence sample_sequence(Rng& rng, std::size_t length = kDefaultLength);

struct CdPairing {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (c position, d position)
  bool unmatched_d = false;
};

/// Left-to-right scan; each d takes the most recent still-open c.
CdPairing pair_c_d(const Sequence& seq);

struct RuleReport {
  std::array<bool, kNumRules> rules{};
  int satisfied = 0;
  bool positive = false;
  std::int64_t rbq = 0;

  bool operator==(const RuleReport&) const = default;
};

/// 3^r - 1: the sum of 2^|s| over the non-empty subsets s of r satisfied rules.
std::int64_t rbq_from_count(int satisfied);

RuleReport make_report(const std::array<bool, kNumRules>& rules);

/// Evaluates the six rules:
///   1. the first event after INI is a
///   2. all four observable types occur (one of them a)
///   3. every d pairs with an earlier c
///   4. #a >= #b >= #c >= #d
///   5. successive occurrences of one type are at least 10 time units apart
///   6. every paired c and d are at most 50 time units apart
/// Throws ContractError on a malformed sequence.
RuleReport check_rules(const Sequence& seq);

struct BuildOptions {
  std::size_t n_target = 1000;
  std::uint64_t seed = 0;
  std::size_t length = kDefaultLength;
  std::size_t block_size = 4096;  // sequences per random stream
  std::size_t starvation_window = 1'000'000;
  double min_acceptance = 1e-5;
  /// Optional label override (tests); defaults to check_rules(...).positive.
  std::function<bool(const Sequence&)> labeler;
};

struct DatasetStats {
  std::size_t attempts = 0;
  std::size_t positive_seen = 0;
  std::size_t negative_seen = 0;
  double positive_rate() const { return attempts ? double(positive_seen) / double(attempts) : 0.0; }
  double negative_rate() const { return attempts ? double(negative_seen) / double(attempts) : 0.0; }
};

struct Dataset {
  std::vector<Sequence> positive;
  std::vector<Sequence> negative;
  DatasetStats stats;
};

/// Samples until both classes hold n_target sequences. Block j of block_size
/// draws comes from Rng::stream(seed, j), so the result does not depend on the
/// thread count. Throws ContractError if either class is accepted at a rate
/// below min_acceptance over the last starvation_window draws.
Dataset build_dataset(const BuildOptions& opts);

}  // namespace tseqgan::synth
