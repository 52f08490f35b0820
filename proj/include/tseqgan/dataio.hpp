#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tseqgan/synthdata.hpp"

namespace tseqgan::io {

/// One JSON object per line:
///   {"events": [...], "dt": [...], "label": 0|1, "rbq": int, "rules": [bool x 6]}
/// with the INI step stored first. Intervals are written with round-trip
/// precision. Generated sequences are written without "label".
std::string to_jsonl_line(const Sequence& seq, const synth::RuleReport& report, bool with_label = true);
std::string to_jsonl(const std::vector<Sequence>& seqs, bool with_label = true);
void write_jsonl(const std::filesystem::path& path, const std::vector<Sequence>& seqs, bool with_label = true);

struct ReadOptions {
  std::size_t length = kDefaultLength;
  /// Recompute the rules and reject records whose stored label/rbq/rules differ.
  bool verify_labels = true;
};

/// Throws FormatError with the file and line number on malformed records.
std::vector<Sequence> read_jsonl(const std::filesystem::path& path, const ReadOptions& opts = {});
std::vector<Sequence> parse_jsonl(const std::string& text, const ReadOptions& opts = {},
                                  const std::string& source = "<memory>");

}  // namespace tseqgan::io
