#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>
#include <string>


#include "tseqgan/rng.hpp"
#include "tseqgan/tape.hpp"

namespace fdcheck {

using tseqgan::diff::GradientMap;
using tseqgan::diff::Tape;
using tseqgan::diff::Tensor;
using tseqgan::diff::Var;

using Params = std::map<std::string, Tensor>;
// Builds a scalar loss on `tape` from the parameters (registered as leaves).
using LossFn = std::function<Var(Tape& tape, const Params& params)>;

inline double eval(const LossFn& fn, const Params& p) {
  Tape tape;
  return fn(tape, p).value().item();
}

struct Result {
  double worst_rel = 0.0;
  std::size_t probes = 0;
};

// Central differences at `probes` random coordinates. Relative error is
// |a - n| / max(1, |a|, |n|).
inline Result check(const LossFn& fn, Params params, std::size_t probes = 100, double h = 1e-5,
                    std::uint64_t seed = 7) {
  Tape tape;
  Var loss = fn(tape, params);
  GradientMap grads = tape.backward(loss);
  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, t] : params) {
    for (std::size_t i = 0; i < t.size(); ++i) coords.emplace_back(name, i);
  }
  tseqgan::Rng rng(seed);
  Result r;
  for (std::size_t k = 0; k < probes; ++k) {
    const auto& [name, i] = coords[rng.below(coords.size())];
    Params plus = params, minus = params;
    plus[name][i] += h;
    minus[name][i] -= h;
    const double numeric = (eval(fn, plus) - eval(fn, minus)) / (2 * h);
    const double analytic = grads.at(name)[i];
    const double rel = std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
    r.worst_rel = std::max(r.worst_rel, rel);
    ++r.probes;
  }
  return r;
}

inline Tensor randn(std::size_t rows, std::size_t cols, tseqgan::Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

}  // namespace fdcheck
