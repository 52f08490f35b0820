#include "tseqgan/timelstm.hpp"

#include <cmath>

#include "tseqgan/error.hpp"

namespace tseqgan::timelstm {

namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

Tensor vec(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }

// Order fixes parameter names, checkpoint layout and initialization draws.
template <typename Self, typename Out>
void collect(Self& p, const std::string& prefix, Out& out) {
  auto add = [&](const char* name, auto& t) { out.emplace_back(prefix + name, &t); };
  add("W_xi", p.W_xi);
  add("W_hi", p.W_hi);
  add("w_ci", p.w_ci);
  add("b_i", p.b_i);
  add("W_xf", p.W_xf);
  add("W_hf", p.W_hf);
  add("w_cf", p.w_cf);
  add("b_f", p.b_f);
  add("W_xt", p.W_xt);
  add("W_tt", p.W_tt);
  add("b_t", p.b_t);
  add("W_xc", p.W_xc);
  add("W_hc", p.W_hc);
  add("b_c", p.b_c);
  add("W_xo", p.W_xo);
  add("W_to", p.W_to);
  add("W_ho", p.W_ho);
  add("w_co", p.w_co);
  add("b_o", p.b_o);
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string("cell_step: non-finite ") + what);
}

}  // namespace

CellParams CellParams::zeros(std::size_t e, std::size_t h) {
  CellParams p;
  p.input_dim = e;
  p.hidden_dim = h;
  for (Tensor* w : {&p.W_xi, &p.W_xf, &p.W_xt, &p.W_xc, &p.W_xo}) *w = Tensor::matrix(e, h);
  for (Tensor* w : {&p.W_hi, &p.W_hf, &p.W_hc, &p.W_ho}) *w = Tensor::matrix(h, h);
  p.W_tt = Tensor::matrix(1, h);
  p.W_to = Tensor::matrix(1, h);
  for (Tensor* v : {&p.w_ci, &p.w_cf, &p.w_co, &p.b_i, &p.b_f, &p.b_t, &p.b_c, &p.b_o}) *v = vec(h);
  return p;
}

CellParams CellParams::random(std::size_t e, std::size_t h, Rng& rng, double stddev, double forget_bias) {
  CellParams p = zeros(e, h);
  for (Tensor* w : {&p.W_xi, &p.W_hi, &p.W_xf, &p.W_hf, &p.W_xt, &p.W_tt, &p.W_xc, &p.W_hc, &p.W_xo, &p.W_to,
                    &p.W_ho}) {
    *w = gaussian(w->rows(), w->cols(), rng, stddev);
  }
  p.b_f.fill(forget_bias);
  return p;
}

diff::ParamRefs CellParams::refs(const std::string& prefix) {
  diff::ParamRefs out;
  collect(*this, prefix, out);
  return out;
}

diff::ConstParamRefs CellParams::refs(const std::string& prefix) const {
  diff::ConstParamRefs out;
  collect(*this, prefix, out);
  return out;
}

CellVars CellVars::bind(Tape& tape, const CellParams& p, const std::string& prefix, bool trainable,
                        IntervalActivation act) {
  auto leaf = [&](const char* name, const Tensor& t) {
    return trainable ? tape.parameter(prefix + name, t) : tape.constant(t);
  };
  CellVars v;
  v.hidden_dim = p.hidden_dim;
  v.interval_activation = act;
  v.W_xi = leaf("W_xi", p.W_xi);
  v.W_hi = leaf("W_hi", p.W_hi);
  v.w_ci = leaf("w_ci", p.w_ci);
  v.b_i = leaf("b_i", p.b_i);
  v.W_xf = leaf("W_xf", p.W_xf);
  v.W_hf = leaf("W_hf", p.W_hf);
  v.w_cf = leaf("w_cf", p.w_cf);
  v.b_f = leaf("b_f", p.b_f);
  v.W_xt = leaf("W_xt", p.W_xt);
  v.W_tt = leaf("W_tt", p.W_tt);
  v.b_t = leaf("b_t", p.b_t);
  v.W_xc = leaf("W_xc", p.W_xc);
  v.W_hc = leaf("W_hc", p.W_hc);
  v.b_c = leaf("b_c", p.b_c);
  v.W_xo = leaf("W_xo", p.W_xo);
  v.W_to = leaf("W_to", p.W_to);
  v.W_ho = leaf("W_ho", p.W_ho);
  v.w_co = leaf("w_co", p.w_co);
  v.b_o = leaf("b_o", p.b_o);
  return v;
}

CellState zero_state(Tape& tape, std::size_t batch, std::size_t hidden_dim) {
  return CellState{tape.constant(Tensor::matrix(batch, hidden_dim)), tape.constant(Tensor::matrix(batch, hidden_dim)),
                   tape.constant(Tensor::matrix(batch, hidden_dim))};
}

CellState cell_step(const CellVars& p, Var x, Var dt, const CellState& prev) {
  using namespace diff;
  const Tensor& dtv = dt.value();
  if (dtv.cols() != 1 || dtv.rows() != x.rows()) {
    throw DimensionError("cell_step: dt must be batch x 1, got " + dtv.shape_string());
  }
  for (double v : dtv.values()) {
    if (std::isfinite(v) && v < 0.0) throw DomainError("cell_step: negative time interval");
  }
  check_finite(dtv, "time interval");
  check_finite(x.value(), "input embedding");
  check_finite(prev.c.value(), "cell state");
  check_finite(prev.h.value(), "hidden state");

  // i = sigmoid(x W_xi + h W_hi + w_ci * c + b_i)
  Var i = sigmoid(add_row(matmul(x, p.W_xi) + matmul(prev.h, p.W_hi) + mul_row(prev.c, p.w_ci), p.b_i));
  Var f = sigmoid(add_row(matmul(x, p.W_xf) + matmul(prev.h, p.W_hf) + mul_row(prev.c, p.w_cf), p.b_f));
  // T = sigmoid(x W_xt + act(dt W_tt) + b_t)
  Var dt_tt = matmul(dt, p.W_tt);
  if (p.interval_activation == IntervalActivation::kSigmoid) dt_tt = sigmoid(dt_tt);
  Var T = sigmoid(add_row(matmul(x, p.W_xt) + dt_tt, p.b_t));
  // c = f * c_prev + i * T * tanh(x W_xc + h W_hc + b_c)
  Var candidate = tanh(add_row(matmul(x, p.W_xc) + matmul(prev.h, p.W_hc), p.b_c));
  Var c = f * prev.c + i * T * candidate;
  // o = sigmoid(x W_xo + dt W_to + h W_ho + w_co * c + b_o), peephole on the new c
  Var o = sigmoid(add_row(matmul(x, p.W_xo) + matmul(dt, p.W_to) + matmul(prev.h, p.W_ho) + mul_row(c, p.w_co), p.b_o));
  Var h = o * tanh(c);
  return CellState{c, h, T};
}

std::vector<CellState> unroll(const CellVars& cell, std::span<const StepInput> inputs, const CellState& init) {
  if (inputs.empty()) throw ContractError("unroll: empty input sequence");
  std::vector<CellState> states;
  states.reserve(inputs.size());
  CellState s = init;
  for (std::size_t m = 0; m < inputs.size(); ++m) {
    try {
      s = cell_step(cell, inputs[m].x_embed, inputs[m].dt, s);
    } catch (const DomainError& e) {
      throw DomainError("step " + std::to_string(m) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(m) + ": " + e.what());
    } catch (const ContractError& e) {
      throw ContractError("step " + std::to_string(m) + ": " + e.what());
    }
    states.push_back(s);
  }
  return states;
}

Var state_features(const CellState& s) { return diff::concat_cols(s.T, s.h); }

}  // namespace tseqgan::timelstm
