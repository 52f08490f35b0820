#include <cmath>
#include <vector>

#include <doctest.h>

#include "fd_check.hpp"
#include "grad_suite.hpp"
#include "tseqgan/error.hpp"
#include "tseqgan/timelstm.hpp"

using namespace tseqgan;
using namespace tseqgan::timelstm;
using fdcheck::Params;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop evaluation of one row for one step.
struct RefState {
  std::vector<double> c, h, T;
};

RefState reference_step(const CellParams& p, const std::vector<double>& x, double dt, const RefState& prev,
                        bool sigmoid_interval) {
  const std::size_t E = p.input_dim, H = p.hidden_dim;
  auto xw = [&](const Tensor& W, std::size_t j) {
    double s = 0;
    for (std::size_t e = 0; e < E; ++e) s += x[e] * W.at(e, j);
    return s;
  };
  auto hw = [&](const Tensor& W, std::size_t j) {
    double s = 0;
    for (std::size_t k = 0; k < H; ++k) s += prev.h[k] * W.at(k, j);
    return s;
  };
  RefState out{std::vector<double>(H), std::vector<double>(H), std::vector<double>(H)};
  for (std::size_t j = 0; j < H; ++j) {
    const double i = sig(xw(p.W_xi, j) + hw(p.W_hi, j) + p.w_ci[j] * prev.c[j] + p.b_i[j]);
    const double f = sig(xw(p.W_xf, j) + hw(p.W_hf, j) + p.w_cf[j] * prev.c[j] + p.b_f[j]);
    const double tt = dt * p.W_tt[j];
    const double T = sig(xw(p.W_xt, j) + (sigmoid_interval ? sig(tt) : tt) + p.b_t[j]);
    const double g = std::tanh(xw(p.W_xc, j) + hw(p.W_hc, j) + p.b_c[j]);
    const double c = f * prev.c[j] + i * T * g;
    const double o = sig(xw(p.W_xo, j) + dt * p.W_to[j] + hw(p.W_ho, j) + p.w_co[j] * c + p.b_o[j]);
    out.c[j] = c;
    out.T[j] = T;
    out.h[j] = o * std::tanh(c);
  }
  return out;
}

CellParams noisy_params(std::size_t E, std::size_t H, std::uint64_t seed) {
  Rng rng(seed);
  CellParams p = CellParams::random(E, H, rng, 0.3);
  // Non-zero peepholes and biases so every term is exercised.
  for (Tensor* t : {&p.w_ci, &p.w_cf, &p.w_co, &p.b_i, &p.b_t, &p.b_c, &p.b_o})
    for (double& v : t->values()) v = 0.2 * rng.normal();
  return p;
}

Params to_params(const CellParams& p) {
  Params out;
  for (const auto& [name, t] : p.refs("cell.")) out[name] = *t;
  return out;
}

CellParams from_params(const Params& m, std::size_t E, std::size_t H) {
  CellParams p = CellParams::zeros(E, H);
  for (auto& [name, t] : p.refs("cell.")) *t = m.at(name);
  return p;
}

}  // namespace

TEST_CASE("initialization follows the documented scheme") {
  Rng rng(3);
  CellParams p = CellParams::random(32, 64, rng);
  CHECK(p.W_xi.rows() == 32);
  CHECK(p.W_xi.cols() == 64);
  CHECK(p.W_hf.rows() == 64);
  CHECK(p.W_tt.size() == 64);
  for (double v : p.b_f.values()) CHECK(v == 1.0);
  for (const Tensor* t : {&p.w_ci, &p.w_cf, &p.w_co, &p.b_i, &p.b_t, &p.b_c, &p.b_o})
    for (double v : t->values()) CHECK(v == 0.0);
  double sq = 0;
  for (double v : p.W_hc.values()) sq += v * v;
  CHECK(std::sqrt(sq / p.W_hc.size()) == doctest::Approx(0.1).epsilon(0.05));
  CHECK(p.refs("x.").size() == 19);
}

TEST_CASE("cell step matches a plain-loop reference") {
  const std::size_t E = 5, H = 4, B = 3;
  for (bool sig_act : {true, false}) {
    CellParams p = noisy_params(E, H, 9);
    Rng rng(10);
    Tape tape;
    CellVars cell = CellVars::bind(tape, p, "cell.", false,
                                   sig_act ? IntervalActivation::kSigmoid : IntervalActivation::kIdentity);
    CellState s = zero_state(tape, B, H);
    std::vector<RefState> ref(B, RefState{std::vector<double>(H), std::vector<double>(H), std::vector<double>(H)});
    for (int step = 0; step < 4; ++step) {
      Tensor x = fdcheck::randn(B, E, rng);
      Tensor dt = Tensor::matrix(B, 1);
      for (double& v : dt.values()) v = std::abs(3 * rng.normal());
      s = cell_step(cell, tape.constant(x), tape.constant(dt), s);
      for (std::size_t r = 0; r < B; ++r) {
        std::vector<double> xr(x.values().begin() + r * E, x.values().begin() + (r + 1) * E);
        ref[r] = reference_step(p, xr, dt[r], ref[r], sig_act);
        for (std::size_t j = 0; j < H; ++j) {
          CHECK(s.h.value().at(r, j) == doctest::Approx(ref[r].h[j]).epsilon(1e-12));
          CHECK(s.c.value().at(r, j) == doctest::Approx(ref[r].c[j]).epsilon(1e-12));
          CHECK(s.T.value().at(r, j) == doctest::Approx(ref[r].T[j]).epsilon(1e-12));
        }
      }
    }
    CHECK(state_features(s).cols() == 2 * H);
  }
}

TEST_CASE("finite differences through a 21-step unroll") {
  const std::size_t E = 4, H = 5, B = 2, L = 21;
  Rng rng(21);
  Params params = to_params(noisy_params(E, H, 4));
  params["x"] = fdcheck::randn(B * L, E, rng);
  std::vector<Tensor> dts;
  for (std::size_t m = 0; m < L; ++m) {
    Tensor d = Tensor::matrix(B, 1);
    for (double& v : d.values()) v = m == 0 ? 0.0 : std::sqrt(16.0) * std::abs(rng.normal());
    dts.push_back(d);
  }
  auto loss = [&](Tape& tape, const Params& p) {
    CellParams cp = from_params(p, E, H);
    CellVars cell = CellVars::bind(tape, cp, "cell.", true);
    Var x = tape.parameter("x", p.at("x"));
    std::vector<StepInput> in;
    for (std::size_t m = 0; m < L; ++m) {
      std::vector<std::size_t> rows;
      for (std::size_t b = 0; b < B; ++b) rows.push_back(m * B + b);
      in.push_back({diff::gather_rows(x, rows), tape.constant(dts[m])});
    }
    auto states = unroll(cell, in, zero_state(tape, B, H));
    Var total = diff::sum(state_features(states.back()));
    for (std::size_t m = 0; m < L; m += 5) total = diff::add(total, diff::mean(diff::square(states[m].c)));
    return total;
  };
  auto r = fdcheck::check(loss, params);
  CHECK(r.worst_rel < 1e-5);
}

TEST_CASE("cell contracts") {
  CellParams p = CellParams::zeros(3, 2);
  Tape tape;
  CellVars cell = CellVars::bind(tape, p, "c.", true);
  CellState s = zero_state(tape, 2, 2);
  Var x = tape.constant(Tensor::matrix(2, 3));
  CHECK_THROWS_AS(cell_step(cell, x, tape.constant(Tensor::matrix({{1.0}, {-0.5}})), s), DomainError);
  CHECK_THROWS_AS(cell_step(cell, x, tape.constant(Tensor::matrix(2, 2)), s), DimensionError);
  CHECK_THROWS_AS(cell_step(cell, tape.constant(Tensor::matrix(2, 4)), tape.constant(Tensor::matrix(2, 1)), s),
                  DimensionError);
  CHECK_THROWS_AS(cell_step(cell, tape.constant(Tensor::matrix({{std::nan(""), 0, 0}, {0, 0, 0}})),
                            tape.constant(Tensor::matrix(2, 1)), s),
                  NumericError);
  std::vector<StepInput> none;
  CHECK_THROWS_AS(unroll(cell, none, s), ContractError);
  std::vector<StepInput> in{{x, tape.constant(Tensor::matrix(2, 1))}, {x, tape.constant(Tensor::matrix({{1.0}, {-1.0}}))}};
  try {
    unroll(cell, in, s);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("finite differences through a full-width 21-step unroll") {
  for (auto act : {IntervalActivation::kSigmoid, IntervalActivation::kIdentity}) {
    const auto c = gradsuite::unroll_case(act);
    INFO(c.name);
    CHECK(c.finite);
    CHECK(c.result.worst_rel < 1e-5);
  }
}
