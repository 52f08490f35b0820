#include "tseqgan/sequence.hpp"

#include <cmath>
#include <string>

#include "tseqgan/error.hpp"

namespace tseqgan {

std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::kA: return "a";
    case EventType::kB: return "b";
    case EventType::kC: return "c";
    case EventType::kD: return "d";
    case EventType::kPad: return "PAD";
    case EventType::kIni: return "INI";
  }
  return "?";
}

EventType parse_event_type(std::string_view name) {
  if (name == "a") return EventType::kA;
  if (name == "b") return EventType::kB;
  if (name == "c") return EventType::kC;
  if (name == "d") return EventType::kD;
  if (name == "PAD") return EventType::kPad;
  if (name == "INI") return EventType::kIni;
  throw FormatError("unknown event type '" + std::string(name) + "'");
}

void validate_sequence(const Sequence& seq, std::size_t length) {
  if (seq.size() != length) {
    throw ContractError("sequence has length " + std::to_string(seq.size()) + ", expected " +
                        std::to_string(length));
  }
  if (seq[0].type != EventType::kIni || seq[0].dt != 0.0) {
    throw ContractError("sequence must start with (INI, 0)");
  }
  for (std::size_t m = 1; m < seq.size(); ++m) {
    if (!is_observable(seq[m].type)) {
      throw ContractError("step " + std::to_string(m) + ": non-observable event " +
                          std::string(to_string(seq[m].type)));
    }
    if (!std::isfinite(seq[m].dt) || seq[m].dt < 0.0) {
      throw DomainError("step " + std::to_string(m) + ": interval must be finite and non-negative");
    }
  }
}

std::vector<double> timestamps(const std::vector<double>& intervals) {
  std::vector<double> t(intervals.size());
  double acc = 0.0;
  for (std::size_t m = 0; m < intervals.size(); ++m) {
    acc += intervals[m];
    t[m] = acc;
  }
  return t;
}

std::vector<double> timestamps(const Sequence& seq) {
  std::vector<double> dt(seq.size());
  for (std::size_t m = 0; m < seq.size(); ++m) dt[m] = seq[m].dt;
  return timestamps(dt);
}

}  // namespace tseqgan
