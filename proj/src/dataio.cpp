#include "tseqgan/dataio.hpp"

#include <sstream>

#include <json.hpp>

#include "tseqgan/error.hpp"
#include "tseqgan/fsutil.hpp"

namespace tseqgan::io {

using nlohmann::json;

namespace {

json record(const Sequence& seq, const synth::RuleReport& report, bool with_label) {
  json events = json::array(), dt = json::array(), rules = json::array();
  for (const auto& e : seq.events) {
    events.push_back(std::string(to_string(e.type)));
    dt.push_back(e.dt);
  }
  for (bool r : report.rules) rules.push_back(r);
  json j;
  j["events"] = std::move(events);
  j["dt"] = std::move(dt);
  if (with_label) j["label"] = report.positive ? 1 : 0;
  j["rbq"] = report.rbq;
  j["rules"] = std::move(rules);
  return j;
}

}  // namespace

std::string to_jsonl_line(const Sequence& seq, const synth::RuleReport& report, bool with_label) {
  return record(seq, report, with_label).dump();
}

std::string to_jsonl(const std::vector<Sequence>& seqs, bool with_label) {
  std::string out;
  for (const auto& s : seqs) {
    out += to_jsonl_line(s, synth::check_rules(s), with_label);
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Sequence>& seqs, bool with_label) {
  fs::write_file_atomic(path, to_jsonl(seqs, with_label));
}

std::vector<Sequence> parse_jsonl(const std::string& text, const ReadOptions& opts, const std::string& source) {
  std::vector<Sequence> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    try {
      json j = json::parse(line);
      const auto& events = j.at("events");
      const auto& dt = j.at("dt");
      if (!events.is_array() || !dt.is_array() || events.size() != dt.size())
        throw FormatError("events and dt must be arrays of equal length");
      Sequence s;
      for (std::size_t m = 0; m < events.size(); ++m) {
        if (!dt[m].is_number()) throw FormatError("dt entries must be numbers");
        s.events.push_back({parse_event_type(events[m].get<std::string>()), dt[m].get<double>()});
      }
      validate_sequence(s, opts.length);
      if (opts.verify_labels) {
        const synth::RuleReport report = synth::check_rules(s);
        if (j.contains("label") && j["label"].get<int>() != (report.positive ? 1 : 0))
          throw FormatError("stored label disagrees with the rule engine");
        if (j.contains("rbq") && j["rbq"].get<std::int64_t>() != report.rbq)
          throw FormatError("stored rbq disagrees with the rule engine");
        if (j.contains("rules")) {
          const auto& r = j["rules"];
          if (!r.is_array() || r.size() != synth::kNumRules) throw FormatError("rules must hold 6 booleans");
          for (std::size_t i = 0; i < synth::kNumRules; ++i)
            if (r[i].get<bool>() != report.rules[i]) throw FormatError("stored rules disagree with the rule engine");
        }
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw FormatError(where + e.what());
    } catch (const ContractError& e) {
      throw FormatError(where + e.what());
    }
  }
  return out;
}

std::vector<Sequence> read_jsonl(const std::filesystem::path& path, const ReadOptions& opts) {
  return parse_jsonl(fs::read_file(path), opts, path.string());
}

}  // namespace tseqgan::io
