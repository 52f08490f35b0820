#pragma once

#include <filesystem>
#include <string>

#include "tseqgan/training.hpp"

namespace tseqgan::ckpt {

/// Container layout:
///   8 bytes   magic "TSGANCK1"
///   8 bytes   manifest length, little-endian u64
///   manifest  JSON: format, engine, config, rng states, counters, history,
///             best-snapshot info and a tensor table (name, shape, offset)
///   blob      little-endian float64 values of every tensor in table order
inline constexpr char kMagic[9] = "TSGANCK1";
inline constexpr int kFormatVersion = 1;

std::string serialize(const train::TrainState& s);
/// Throws FormatError on a bad magic, unsupported version or corrupt layout.
train::TrainState deserialize(const std::string& bytes);

void save(const std::filesystem::path& path, const train::TrainState& s);
train::TrainState load(const std::filesystem::path& path);

/// State whose current networks are replaced by the best snapshot (if any).
train::TrainState with_best_as_current(const train::TrainState& s);

}  // namespace tseqgan::ckpt
