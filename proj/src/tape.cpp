#include "tseqgan/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tseqgan/error.hpp"
#include "tseqgan/kernels.hpp"

namespace tseqgan::diff {

const Tensor& Var::value() const {
  if (tape == nullptr) throw ContractError("Var: not attached to a tape");
  return tape->node(id).value;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kMulRow: return "mul_row";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kClamp: return "clamp";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kColumn: return "column";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kLogSoftmaxPick: return "log_softmax_pick";
    case OpKind::kSoftmaxXent: return "softmax_cross_entropy";
    case OpKind::kBceWithLogits: return "bce_with_logits";
  }
  return "?";
}

// --- Tape -------------------------------------------------------------------

Var Tape::push(TapeNode node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = leaf_ids_.find(name); it != leaf_ids_.end()) return Var{this, it->second};
  TapeNode node;
  node.kind = OpKind::kLeaf;
  node.requires_grad = true;
  node.value = value;
  Var v = push(std::move(node));
  leaf_ids_.emplace(name, v.id);
  return v;
}

Var Tape::constant(Tensor value) {
  TapeNode node;
  node.kind = OpKind::kConstant;
  node.value = std::move(value);
  return push(std::move(node));
}

void Tape::clear() {
  nodes_.clear();
  leaf_ids_.clear();
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(op) + ": operands on different tapes");
  }
  return *a.tape;
}

Tape& tape_of(Var a, const char* op) {
  if (a.tape == nullptr) throw ContractError(std::string(op) + ": detached operand");
  return *a.tape;
}

Var record(Tape& tape, OpKind kind, std::initializer_list<Var> parents, Tensor value) {
  TapeNode node;
  node.kind = kind;
  node.value = std::move(value);
  for (Var p : parents) {
    node.parents[node.n_parents++] = p.id;
    node.requires_grad = node.requires_grad || tape.node(p.id).requires_grad;
  }
  return tape.push(std::move(node));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

Tensor like(const Tensor& t, double fill = 0.0) { return Tensor::matrix(t.rows(), t.cols(), fill); }

bool is_scalar(const Tensor& t) { return t.size() == 1; }

template <typename F>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f) {
  if (a.same_shape(b)) {
    Tensor out = like(a);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  if (is_scalar(b)) {
    Tensor out = like(a);
    const double s = b[0];
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], s);
    return out;
  }
  shape_error(op, a, b);
}

template <typename F>
Tensor unary(const Tensor& a, F f) {
  Tensor out = like(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// --- Forward ops -------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  kernels::gemm_nn(av.data().data(), bv.data().data(), out.data().data(), av.rows(), av.cols(), bv.cols());
  return record(tape, OpKind::kMatMul, {a, b}, std::move(out));
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b, "add");
  return record(tape, OpKind::kAdd, {a, b}, binary("add", a.value(), b.value(), std::plus<>()));
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b, "sub");
  return record(tape, OpKind::kSub, {a, b}, binary("sub", a.value(), b.value(), std::minus<>()));
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "mul");
  return record(tape, OpKind::kMul, {a, b}, binary("mul", a.value(), b.value(), std::multiplies<>()));
}

Var add_row(Var a, Var row) {
  Tape& tape = same_tape(a, row, "add_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("add_row", av, rv);
  Tensor out = like(av);
  const std::size_t n = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = av[r * n + c] + rv[c];
  }
  return record(tape, OpKind::kAddRow, {a, row}, std::move(out));
}

Var mul_row(Var a, Var row) {
  Tape& tape = same_tape(a, row, "mul_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("mul_row", av, rv);
  Tensor out = like(av);
  const std::size_t n = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = av[r * n + c] * rv[c];
  }
  return record(tape, OpKind::kMulRow, {a, row}, std::move(out));
}

Var scale(Var a, double factor) {
  Tape& tape = tape_of(a, "scale");
  Var v = record(tape, OpKind::kScale, {a}, unary(a.value(), [factor](double x) { return factor * x; }));
  tape.mutable_node(v.id).scalar_a = factor;
  return v;
}

Var add_scalar(Var a, double value) {
  Tape& tape = tape_of(a, "add_scalar");
  return record(tape, OpKind::kAddScalar, {a}, unary(a.value(), [value](double x) { return x + value; }));
}

Var sigmoid(Var a) {
  Tape& tape = tape_of(a, "sigmoid");
  return record(tape, OpKind::kSigmoid, {a}, unary(a.value(), stable_sigmoid));
}

Var tanh(Var a) {
  Tape& tape = tape_of(a, "tanh");
  return record(tape, OpKind::kTanh, {a}, unary(a.value(), [](double x) { return std::tanh(x); }));
}

Var exp(Var a) {
  Tape& tape = tape_of(a, "exp");
  return record(tape, OpKind::kExp, {a}, unary(a.value(), [](double x) { return std::exp(x); }));
}

Var log(Var a) {
  Tape& tape = tape_of(a, "log");
  const Tensor& av = a.value();
  for (double x : av.values()) {
    if (!(x > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(x));
  }
  return record(tape, OpKind::kLog, {a}, unary(av, [](double x) { return std::log(x); }));
}

Var square(Var a) {
  Tape& tape = tape_of(a, "square");
  return record(tape, OpKind::kSquare, {a}, unary(a.value(), [](double x) { return x * x; }));
}

Var clamp(Var a, double lo, double hi) {
  Tape& tape = tape_of(a, "clamp");
  if (lo > hi) throw ContractError("clamp: lo > hi");
  Var v = record(tape, OpKind::kClamp, {a}, unary(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); }));
  auto& node = tape.mutable_node(v.id);
  node.scalar_a = lo;
  node.scalar_b = hi;
  return v;
}

Var concat_cols(Var a, Var b) {
  Tape& tape = same_tape(a, b, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) shape_error("concat_cols", av, bv);
  const std::size_t na = av.cols();
  const std::size_t nb = bv.cols();
  Tensor out = Tensor::matrix(av.rows(), na + nb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.data().begin() + r * na, na, out.data().begin() + r * (na + nb));
    std::copy_n(bv.data().begin() + r * nb, nb, out.data().begin() + r * (na + nb) + na);
  }
  return record(tape, OpKind::kConcatCols, {a, b}, std::move(out));
}

Var column(Var a, std::size_t index) {
  Tape& tape = tape_of(a, "column");
  const Tensor& av = a.value();
  if (index >= av.cols()) throw IndexError("column: index out of range");
  Tensor out = Tensor::matrix(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) out[r] = av.at(r, index);
  Var v = record(tape, OpKind::kColumn, {a}, std::move(out));
  tape.mutable_node(v.id).indices = {index};
  return v;
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
  Tape& tape = tape_of(table, "gather_rows");
  const Tensor& tv = table.value();
  if (indices.empty()) throw ContractError("gather_rows: no indices");
  const std::size_t n = tv.cols();
  Tensor out = Tensor::matrix(indices.size(), n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= tv.rows()) throw IndexError("gather_rows: index out of range");
    std::copy_n(tv.data().begin() + indices[r] * n, n, out.data().begin() + r * n);
  }
  Var v = record(tape, OpKind::kGatherRows, {table}, std::move(out));
  tape.mutable_node(v.id).indices = std::move(indices);
  return v;
}

Var sum(Var a) {
  Tape& tape = tape_of(a, "sum");
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return record(tape, OpKind::kSum, {a}, Tensor::scalar(s));
}

Var mean(Var a) {
  Tape& tape = tape_of(a, "mean");
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return record(tape, OpKind::kMean, {a}, Tensor::scalar(s / static_cast<double>(a.value().size())));
}

namespace {

// Softmax over the allowed columns of one row; returns log-sum-exp.
double masked_softmax_row(const double* z, std::size_t n, const std::vector<bool>& allowed, double* p) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (allowed.empty() || allowed[j]) mx = std::max(mx, z[j]);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (allowed.empty() || allowed[j]) {
      p[j] = std::exp(z[j] - mx);
      s += p[j];
    } else {
      p[j] = 0.0;
    }
  }
  for (std::size_t j = 0; j < n; ++j) p[j] /= s;
  return mx + std::log(s);
}

}  // namespace

Var log_softmax_pick(Var logits, std::vector<std::size_t> targets, std::vector<bool> allowed) {
  Tape& tape = tape_of(logits, "log_softmax_pick");
  const Tensor& z = logits.value();
  const std::size_t n = z.cols();
  if (targets.size() != z.rows()) throw DimensionError("log_softmax_pick: one target per row required");
  if (!allowed.empty() && allowed.size() != n) throw DimensionError("log_softmax_pick: mask width mismatch");
  if (!allowed.empty() && std::none_of(allowed.begin(), allowed.end(), [](bool b) { return b; })) {
    throw ContractError("log_softmax_pick: every column masked");
  }
  Tensor probs = like(z);
  Tensor out = Tensor::matrix(z.rows(), 1);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const std::size_t t = targets[r];
    if (t >= n) throw IndexError("log_softmax_pick: target " + std::to_string(t) + " out of range");
    if (!allowed.empty() && !allowed[t]) throw IndexError("log_softmax_pick: target is masked");
    const double lse = masked_softmax_row(z.data().data() + r * n, n, allowed, probs.data().data() + r * n);
    out[r] = z.at(r, t) - lse;
  }
  Var v = record(tape, OpKind::kLogSoftmaxPick, {logits}, std::move(out));
  auto& node = tape.mutable_node(v.id);
  node.indices = std::move(targets);
  node.cache = std::move(probs);
  return v;
}

Var softmax_cross_entropy(Var logits, std::size_t target) {
  Tape& tape = tape_of(logits, "softmax_cross_entropy");
  const Tensor& z = logits.value();
  if (z.rows() != 1) throw DimensionError("softmax_cross_entropy: expects a single row of logits");
  if (target >= z.cols()) throw IndexError("softmax_cross_entropy: target out of range");
  Tensor probs = like(z);
  const double lse = masked_softmax_row(z.data().data(), z.cols(), {}, probs.data().data());
  Var v = record(tape, OpKind::kSoftmaxXent, {logits}, Tensor::scalar(lse - z[target]));
  auto& node = tape.mutable_node(v.id);
  node.indices = {target};
  node.cache = std::move(probs);
  return v;
}

Var bce_with_logits(Var logits, const Tensor& labels) {
  Tape& tape = tape_of(logits, "bce_with_logits");
  const Tensor& z = logits.value();
  if (!z.same_shape(labels)) shape_error("bce_with_logits", z, labels);
  Tensor out = like(z);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double x = z[i];
    out[i] = std::max(x, 0.0) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
  }
  Var v = record(tape, OpKind::kBceWithLogits, {logits}, std::move(out));
  tape.mutable_node(v.id).cache = labels;
  return v;
}

// --- Backward ----------------------------------------------------------------

namespace {

Tensor& grad_of(Tape& tape, std::size_t id) {
  TapeNode& n = tape.mutable_node(id);
  if (n.grad.empty()) n.grad = like(n.value);
  return n.grad;
}

void accumulate(Tape& tape, std::size_t id, const Tensor& g) {
  if (!tape.node(id).requires_grad) return;
  Tensor& dst = grad_of(tape, id);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// Gradient for the second operand of a possibly scalar-broadcast binary op.
void accumulate_broadcast(Tape& tape, std::size_t id, const Tensor& g) {
  if (!tape.node(id).requires_grad) return;
  Tensor& dst = grad_of(tape, id);
  if (dst.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  } else {
    double s = 0.0;
    for (double x : g.values()) s += x;
    dst[0] += s;
  }
}

void backprop_node(Tape& tape, std::size_t id) {
  const TapeNode& node = tape.node(id);
  const Tensor& g = node.grad;
  const Tensor& y = node.value;
  const std::size_t pa = node.parents[0];
  const std::size_t pb = node.parents[1];

  switch (node.kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return;

    case OpKind::kMatMul: {
      const Tensor& a = tape.node(pa).value;
      const Tensor& b = tape.node(pb).value;
      if (tape.node(pa).requires_grad) {
        Tensor& da = grad_of(tape, pa);
        kernels::gemm_nt(g.data().data(), b.data().data(), da.data().data(), g.rows(), g.cols(), a.cols());
      }
      if (tape.node(pb).requires_grad) {
        Tensor& db = grad_of(tape, pb);
        kernels::gemm_tn(a.data().data(), g.data().data(), db.data().data(), a.rows(), a.cols(), g.cols());
      }
      return;
    }

    case OpKind::kAdd:
      accumulate(tape, pa, g);
      accumulate_broadcast(tape, pb, g);
      return;

    case OpKind::kSub: {
      accumulate(tape, pa, g);
      Tensor neg = unary(g, [](double x) { return -x; });
      accumulate_broadcast(tape, pb, neg);
      return;
    }

    case OpKind::kMul: {
      const Tensor& a = tape.node(pa).value;
      const Tensor& b = tape.node(pb).value;
      if (tape.node(pa).requires_grad) {
        Tensor& da = grad_of(tape, pa);
        const bool bs = b.size() != a.size();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (bs ? b[0] : b[i]);
      }
      if (tape.node(pb).requires_grad) {
        Tensor ga = like(g);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * a[i];
        accumulate_broadcast(tape, pb, ga);
      }
      return;
    }

    case OpKind::kAddRow: {
      accumulate(tape, pa, g);
      if (tape.node(pb).requires_grad) {
        Tensor& dr = grad_of(tape, pb);
        const std::size_t n = g.cols();
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < n; ++c) dr[c] += g[r * n + c];
        }
      }
      return;
    }

    case OpKind::kMulRow: {
      const Tensor& a = tape.node(pa).value;
      const Tensor& row = tape.node(pb).value;
      const std::size_t n = g.cols();
      if (tape.node(pa).requires_grad) {
        Tensor& da = grad_of(tape, pa);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < n; ++c) da[r * n + c] += g[r * n + c] * row[c];
        }
      }
      if (tape.node(pb).requires_grad) {
        Tensor& dr = grad_of(tape, pb);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < n; ++c) dr[c] += g[r * n + c] * a[r * n + c];
        }
      }
      return;
    }

    case OpKind::kScale: {
      const double f = node.scalar_a;
      accumulate(tape, pa, unary(g, [f](double x) { return f * x; }));
      return;
    }

    case OpKind::kAddScalar:
      accumulate(tape, pa, g);
      return;

    case OpKind::kSigmoid: {
      Tensor d = like(g);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * y[i] * (1.0 - y[i]);
      accumulate(tape, pa, d);
      return;
    }

    case OpKind::kTanh: {
      Tensor d = like(g);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (1.0 - y[i] * y[i]);
      accumulate(tape, pa, d);
      return;
    }

    case OpKind::kExp: {
      Tensor d = like(g);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * y[i];
      accumulate(tape, pa, d);
      return;
    }

    case OpKind::kLog: {
      const Tensor& a = tape.node(pa).value;
      Tensor d = like(g);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / a[i];
      accumulate(tape, pa, d);
      return;
    }

    case OpKind::kSquare: {
      const Tensor& a = tape.node(pa).value;
      Tensor d = like(g);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = 2.0 * a[i] * g[i];
      accumulate(tape, pa, d);
      return;
    }

    case OpKind::kClamp: {
      const Tensor& a = tape.node(pa).value;
      Tensor d = like(g);
      for (std::size_t i = 0; i < g.size(); ++i) {
        d[i] = (a[i] < node.scalar_a || a[i] > node.scalar_b) ? 0.0 : g[i];
      }
      accumulate(tape, pa, d);
      return;
    }

    case OpKind::kConcatCols: {
      const std::size_t na = tape.node(pa).value.cols();
      const std::size_t nb = tape.node(pb).value.cols();
      const std::size_t rows = g.rows();
      if (tape.node(pa).requires_grad) {
        Tensor& da = grad_of(tape, pa);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < na; ++c) da[r * na + c] += g[r * (na + nb) + c];
        }
      }
      if (tape.node(pb).requires_grad) {
        Tensor& db = grad_of(tape, pb);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < nb; ++c) db[r * nb + c] += g[r * (na + nb) + na + c];
        }
      }
      return;
    }

    case OpKind::kColumn: {
      if (!tape.node(pa).requires_grad) return;
      Tensor& da = grad_of(tape, pa);
      const std::size_t n = da.cols();
      const std::size_t j = node.indices[0];
      for (std::size_t r = 0; r < g.rows(); ++r) da[r * n + j] += g[r];
      return;
    }

    case OpKind::kGatherRows: {
      if (!tape.node(pa).requires_grad) return;
      Tensor& dt = grad_of(tape, pa);
      const std::size_t n = dt.cols();
      for (std::size_t r = 0; r < node.indices.size(); ++r) {
        const std::size_t row = node.indices[r];
        for (std::size_t c = 0; c < n; ++c) dt[row * n + c] += g[r * n + c];
      }
      return;
    }

    case OpKind::kSum: {
      const Tensor& a = tape.node(pa).value;
      accumulate(tape, pa, like(a, g[0]));
      return;
    }

    case OpKind::kMean: {
      const Tensor& a = tape.node(pa).value;
      accumulate(tape, pa, like(a, g[0] / static_cast<double>(a.size())));
      return;
    }

    case OpKind::kLogSoftmaxPick: {
      const Tensor& p = node.cache;
      const std::size_t n = p.cols();
      Tensor d = like(p);
      for (std::size_t r = 0; r < p.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) d[r * n + c] = -g[r] * p[r * n + c];
        d[r * n + node.indices[r]] += g[r];
      }
      accumulate(tape, pa, d);
      return;
    }

    case OpKind::kSoftmaxXent: {
      Tensor d = node.cache;
      d[node.indices[0]] -= 1.0;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= g[0];
      accumulate(tape, pa, d);
      return;
    }

    case OpKind::kBceWithLogits: {
      const Tensor& z = tape.node(pa).value;
      const Tensor& labels = node.cache;
      Tensor d = like(z);
      for (std::size_t i = 0; i < z.size(); ++i) d[i] = g[i] * (stable_sigmoid(z[i]) - labels[i]);
      accumulate(tape, pa, d);
      return;
    }
  }
}

}  // namespace

GradientMap Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss is not on this tape");
  if (node(loss.id).value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + node(loss.id).value.shape_string());
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (node(loss.id).requires_grad) {
    grad_of(*this, loss.id)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      if (!nodes_[id].requires_grad || nodes_[id].grad.empty()) continue;
      backprop_node(*this, id);
    }
  }
  GradientMap grads;
  for (const auto& [name, id] : leaf_ids_) {
    const TapeNode& leaf = nodes_[id];
    grads.emplace(name, leaf.grad.empty() ? Tensor(leaf.value.shape(), 0.0)
                                          : Tensor(leaf.value.shape(), leaf.grad.values()));
  }
  return grads;
}

}  // namespace tseqgan::diff
