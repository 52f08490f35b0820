#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tseqgan {

/// Event vocabulary: four observable types, a padding/end token and the
/// dummy start token. Values index embedding rows and logits.
enum class EventType : std::uint8_t { kA = 0, kB = 1, kC = 2, kD = 3, kPad = 4, kIni = 5 };

inline constexpr std::size_t kNumEventTypes = 6;
inline constexpr std::size_t kNumObservableTypes = 4;
/// Sequence length including the (INI, 0) step.
inline constexpr std::size_t kDefaultLength = 21;

std::string_view to_string(EventType t);
/// Throws FormatError on an unknown name.
EventType parse_event_type(std::string_view name);

constexpr std::size_t index(EventType t) { return static_cast<std::size_t>(t); }
constexpr bool is_observable(EventType t) { return index(t) < kNumObservableTypes; }

struct Event {
  EventType type = EventType::kIni;
  double dt = 0.0;  // interval since the previous event

  bool operator==(const Event&) const = default;
};

struct Sequence {
  std::vector<Event> events;

  std::size_t size() const { return events.size(); }
  const Event& operator[](std::size_t m) const { return events[m]; }
  bool operator==(const Sequence&) const = default;
};

/// Structural check: (INI, 0) first, exact length, observable types after the
/// start, finite non-negative intervals. Throws ContractError (or DomainError
/// for bad intervals).
void validate_sequence(const Sequence& seq, std::size_t length = kDefaultLength);

/// Prefix sums of the intervals: t_m = sum_{j <= m} dt_j.
std::vector<double> timestamps(const Sequence& seq);
std::vector<double> timestamps(const std::vector<double>& intervals);

}  // namespace tseqgan
