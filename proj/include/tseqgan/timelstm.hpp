#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tseqgan/optim.hpp"
#include "tseqgan/rng.hpp"
#include "tseqgan/tape.hpp"

namespace tseqgan::timelstm {

using diff::Tape;
using diff::Tensor;
using diff::Var;

/// Squashing applied to dt * W_tt inside the time gate.
enum class IntervalActivation { kSigmoid, kIdentity };

/// Weights of a type-1 Time-LSTM cell with input width E and hidden width H.
/// W_x* are E x H, W_h* are H x H, W_tt and W_to are 1 x H, peepholes and
/// biases are length-H vectors.
struct CellParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  Tensor W_xi, W_hi, w_ci, b_i;
  Tensor W_xf, W_hf, w_cf, b_f;
  Tensor W_xt, W_tt, b_t;
  Tensor W_xc, W_hc, b_c;
  Tensor W_xo, W_to, W_ho, w_co, b_o;

  static CellParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  /// Weights ~ N(0, stddev^2); peepholes and biases zero except b_f.
  static CellParams random(std::size_t input_dim, std::size_t hidden_dim, Rng& rng, double stddev = 0.1,
                           double forget_bias = 1.0);

  diff::ParamRefs refs(const std::string& prefix);
  diff::ConstParamRefs refs(const std::string& prefix) const;
};

/// CellParams recorded on a tape, as trainable leaves or as constants.
struct CellVars {
  Var W_xi, W_hi, w_ci, b_i;
  Var W_xf, W_hf, w_cf, b_f;
  Var W_xt, W_tt, b_t;
  Var W_xc, W_hc, b_c;
  Var W_xo, W_to, W_ho, w_co, b_o;
  std::size_t hidden_dim = 0;
  IntervalActivation interval_activation = IntervalActivation::kSigmoid;

  static CellVars bind(Tape& tape, const CellParams& params, const std::string& prefix, bool trainable,
                       IntervalActivation act = IntervalActivation::kSigmoid);
};

/// Batched cell state; each field is batch x H.
struct CellState {
  Var c;
  Var h;
  Var T;  // time-gate activation of the step that produced this state
};

CellState zero_state(Tape& tape, std::size_t batch, std::size_t hidden_dim);

/// One Time-LSTM step.
///   x_embed: batch x E, dt: batch x 1 (non-negative).
/// Throws DomainError on a negative interval, NumericError on non-finite input.
CellState cell_step(const CellVars& cell, Var x_embed, Var dt, const CellState& prev);

struct StepInput {
  Var x_embed;
  Var dt;
};

/// Applies cell_step over the inputs; returns the state after every step.
/// Errors from a step are rethrown with the step index prepended.
std::vector<CellState> unroll(const CellVars& cell, std::span<const StepInput> inputs, const CellState& init);

/// S_m = [T_m ; h_m], batch x 2H.
Var state_features(const CellState& s);

}  // namespace tseqgan::timelstm
