#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// A Tape owns every value produced during one forward pass. Primitives append
// a Record holding the input ids, the output id and the backward rule; the
// rule reads saved forward values back from the tape, which never mutates them.
// backward() walks the records once in reverse and accumulates gradients into
// every node that requires one.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "fmp/matrix.hpp"

namespace fmp {
class SparseGraph;
struct IncidentVector;
}  // namespace fmp

namespace fmp::ad {

enum class OpKind {
  matmul,
  spmm,
  add,
  add_row,
  sub,
  scale,
  mul,
  relu,
  row_softmax,
  clamp,
  row_sum_broadcast,
  cross_entropy,
  sum,
  fairness_grad,
};

const char* op_name(OpKind kind);

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Matrix& value() const;
  // Empty matrix until backward() reaches this node.
  const Matrix& grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct Record;
using BackwardFn = std::function<void(Tape&, const Record&)>;

struct Record {
  OpKind kind;
  std::vector<std::size_t> inputs;
  std::size_t output;
  BackwardFn backward;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // Loss must be 1×1. Gradients from a previous backward() are cleared first.
  void backward(Var loss);

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  const Matrix& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  std::span<const Record> records() const noexcept { return records_; }

  // Used by primitives.
  Var record(OpKind kind, std::initializer_list<Var> inputs, Matrix value, BackwardFn backward);
  void accumulate(std::size_t id, const Matrix& g);
  void accumulate(std::size_t id, Matrix&& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Record> records_;
};

// Primitives. All inputs must live on the same tape.
Var matmul(Var a, Var b);
// Ã·x with Ã constant; Ã is symmetric so the backward rule is Ã·g.
// The graph must outlive the tape.
Var spmm(const SparseGraph& g, Var x);
Var add(Var a, Var b);
// a (n×d) + bias (1×d) broadcast over rows.
Var add_row(Var a, Var bias);
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var mul(Var a, Var b);
Var relu(Var a);
Var row_softmax(Var a);
// Gradient passes where lo ≤ x ≤ hi, inclusive of both boundaries.
Var clamp(Var a, double lo, double hi);
// out_ij = Σ_k a_ik.
Var row_sum_broadcast(Var a);
// Mean over `nodes` of −log softmax(logits)_{i, labels_i}.
Var cross_entropy_with_logits(Var logits, std::span<const int> labels,
                              std::span<const std::size_t> nodes);
Var sum(Var a);
// Fused ∂⟨Δ_s·SF(F), u⟩/∂F with an exact O(n·d) vector-Jacobian rule for both
// f and u. Equal to the composition of the primitives above (see
// fairness_grad_composite in fmp.hpp).
Var fairness_grad(Var f, Var u, const IncidentVector& delta);

}  // namespace fmp::ad
