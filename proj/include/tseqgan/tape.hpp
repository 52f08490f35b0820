#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "tseqgan/tensor.hpp"

namespace tseqgan::diff {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

enum class OpKind {
  kLeaf,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kAddRow,
  kMulRow,
  kScale,
  kAddScalar,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kSquare,
  kClamp,
  kConcatCols,
  kColumn,
  kGatherRows,
  kSum,
  kMean,
  kLogSoftmaxPick,
  kSoftmaxXent,
  kBceWithLogits,
};

const char* op_name(OpKind kind);

struct TapeNode {
  OpKind kind = OpKind::kConstant;
  std::array<std::size_t, 2> parents{};
  std::size_t n_parents = 0;
  bool requires_grad = false;
  Tensor value;
  Tensor grad;
  // Op-specific cached data: scale factor, clamp bounds, column index,
  // gather/pick indices, softmax probabilities, masks.
  double scalar_a = 0.0;
  double scalar_b = 0.0;
  std::vector<std::size_t> indices;
  Tensor cache;
};

/// Gradients of a scalar loss keyed by parameter name.
using GradientMap = std::map<std::string, Tensor>;

/// Append-only record of a forward computation.
///
/// Node ids increase in evaluation order, so walking them in decreasing order
/// is a reverse topological traversal; each node is visited once. A tape is
/// owned and consumed by one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Trainable leaf. Repeated calls with the same name return the same node.
  Var parameter(const std::string& name, const Tensor& value);
  Var constant(Tensor value);

  const TapeNode& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 loss. Returns d(loss)/d(leaf) for every
  /// parameter leaf; leaves the loss does not depend on get zero gradients.
  GradientMap backward(Var loss);

  void clear();

  // Used by the op functions below.
  Var push(TapeNode node);
  TapeNode& mutable_node(std::size_t id) { return nodes_[id]; }

 private:
  std::deque<TapeNode> nodes_;  // stable references across push
  std::map<std::string, std::size_t> leaf_ids_;
};

// --- Operations -----------------------------------------------------------
// All arguments must live on the same tape.

Var matmul(Var a, Var b);

// Elementwise; b may be a 1x1 scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a is rows x n, row is 1 x n and is broadcast over rows.
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);

Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
/// Throws DomainError on non-positive input.
Var log(Var a);
Var square(Var a);
/// Clamp to [lo, hi]; gradient is zero where clamped.
Var clamp(Var a, double lo, double hi);

Var concat_cols(Var a, Var b);
Var column(Var a, std::size_t index);
/// Rows of `table` selected by `indices` (embedding lookup).
Var gather_rows(Var table, std::vector<std::size_t> indices);

Var sum(Var a);
Var mean(Var a);

/// Per-row log softmax(logits)[target], normalized over the unmasked
/// columns only. Output is rows x 1. Targets must be unmasked.
Var log_softmax_pick(Var logits, std::vector<std::size_t> targets, std::vector<bool> allowed = {});
/// -log softmax(logits)[target] for a single row of logits; 1x1 output.
Var softmax_cross_entropy(Var logits, std::size_t target);
/// Elementwise binary cross-entropy of sigmoid(logits) against labels
/// in [0, 1] (same shape), computed stably from logits.
Var bce_with_logits(Var logits, const Tensor& labels);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace tseqgan::diff
