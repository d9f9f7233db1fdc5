#include "fmp/autodiff.hpp"

#include <cmath>
#include <string>

#include "fmp/error.hpp"
#include "fmp/graph.hpp"
#include "fmp/simd/kernels.hpp"

namespace fmp::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::spmm: return "spmm";
    case OpKind::add: return "add";
    case OpKind::add_row: return "add_row";
    case OpKind::sub: return "sub";
    case OpKind::scale: return "scale";
    case OpKind::mul: return "mul";
    case OpKind::relu: return "relu";
    case OpKind::row_softmax: return "row_softmax";
    case OpKind::clamp: return "clamp";
    case OpKind::row_sum_broadcast: return "row_sum_broadcast";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::sum: return "sum";
    case OpKind::fairness_grad: return "fairness_grad";
  }
  return "?";
}

const Matrix& Var::value() const {
  require(valid(), ErrorCode::invalid_argument, "use of an unbound Var");
  return tape_->value(id_);
}

const Matrix& Var::grad() const {
  require(valid(), ErrorCode::invalid_argument, "use of an unbound Var");
  return tape_->grad(id_);
}

bool Var::requires_grad() const {
  require(valid(), ErrorCode::invalid_argument, "use of an unbound Var");
  return tape_->requires_grad(id_);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::initializer_list<Var> inputs, Matrix value,
                 BackwardFn backward) {
  bool needs_grad = false;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const Var& v : inputs) {
    require(v.tape() == this, ErrorCode::invalid_argument,
            std::string(op_name(kind)) + ": input belongs to a different tape");
    needs_grad = needs_grad || nodes_[v.id()].requires_grad;
    ids.push_back(v.id());
  }
  nodes_.push_back(Node{std::move(value), Matrix{}, needs_grad});
  const std::size_t out = nodes_.size() - 1;
  if (needs_grad) records_.push_back(Record{kind, std::move(ids), out, std::move(backward)});
  return Var(this, out);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  require_same_shape(node.value, g, "gradient accumulation");
  if (node.grad.empty()) {
    node.grad = g;
    return;
  }
  simd::active_kernels().axpby(g.size(), 1.0, node.grad.data(), 1.0, g.data(), node.grad.data());
}

void Tape::accumulate(std::size_t id, Matrix&& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  require_same_shape(node.value, g, "gradient accumulation");
  if (node.grad.empty()) {
    node.grad = std::move(g);
    return;
  }
  simd::active_kernels().axpby(g.size(), 1.0, node.grad.data(), 1.0, g.data(), node.grad.data());
}

void Tape::backward(Var loss) {
  require(loss.tape() == this, ErrorCode::invalid_argument, "loss belongs to a different tape");
  require(loss.value().rows() == 1 && loss.value().cols() == 1, ErrorCode::dimension_mismatch,
          "backward: loss must be 1x1, got " + loss.value().shape_string());
  for (Node& node : nodes_) node.grad = Matrix{};
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix(1, 1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    // Records are appended after their inputs, so a reverse walk is a
    // reverse topological order.
    for (std::size_t in : it->inputs)
      if (in >= it->output) fail(ErrorCode::invalid_argument, "tape is not topologically ordered");
    if (it->output > loss.id()) continue;
    if (nodes_[it->output].grad.empty()) continue;
    it->backward(*this, *it);
  }
}

namespace {

Tape& tape_of(Var a) {
  require(a.valid(), ErrorCode::invalid_argument, "use of an unbound Var");
  return *a.tape();
}

const Matrix& out_grad(const Tape& t, const Record& r) { return t.grad(r.output); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  Matrix value = fmp::matmul(a.value(), b.value());
  return t.record(OpKind::matmul, {a, b}, std::move(value), [](Tape& t, const Record& r) {
    const Matrix& g = out_grad(t, r);
    const std::size_t a_id = r.inputs[0], b_id = r.inputs[1];
    if (t.requires_grad(a_id)) t.accumulate(a_id, fmp::matmul_nt(g, t.value(b_id)));
    if (t.requires_grad(b_id)) t.accumulate(b_id, fmp::matmul_tn(t.value(a_id), g));
  });
}

Var spmm(const SparseGraph& graph, Var x) {
  Tape& t = tape_of(x);
  Matrix value = fmp::spmm(graph, x.value());
  const SparseGraph* gp = &graph;
  return t.record(OpKind::spmm, {x}, std::move(value), [gp](Tape& t, const Record& r) {
    t.accumulate(r.inputs[0], fmp::spmm(*gp, out_grad(t, r)));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  Matrix value = fmp::axpby(1.0, a.value(), 1.0, b.value());
  return t.record(OpKind::add, {a, b}, std::move(value), [](Tape& t, const Record& r) {
    t.accumulate(r.inputs[0], out_grad(t, r));
    t.accumulate(r.inputs[1], out_grad(t, r));
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const Matrix& b = bias.value();
  require(b.rows() == 1 && b.cols() == x.cols(), ErrorCode::dimension_mismatch,
          "add_row: bias " + b.shape_string() + " for input " + x.shape_string());
  Matrix value(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) value(i, j) = x(i, j) + b(0, j);
  return t.record(OpKind::add_row, {a, bias}, std::move(value), [](Tape& t, const Record& r) {
    const Matrix& g = out_grad(t, r);
    t.accumulate(r.inputs[0], g);
    if (t.requires_grad(r.inputs[1])) {
      Matrix gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      t.accumulate(r.inputs[1], std::move(gb));
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  Matrix value = fmp::axpby(1.0, a.value(), -1.0, b.value());
  return t.record(OpKind::sub, {a, b}, std::move(value), [](Tape& t, const Record& r) {
    t.accumulate(r.inputs[0], out_grad(t, r));
    if (t.requires_grad(r.inputs[1])) t.accumulate(r.inputs[1], fmp::scaled(out_grad(t, r), -1.0));
  });
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a);
  Matrix value = fmp::scaled(a.value(), c);
  return t.record(OpKind::scale, {a}, std::move(value), [c](Tape& t, const Record& r) {
    t.accumulate(r.inputs[0], fmp::scaled(out_grad(t, r), c));
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  Matrix value = fmp::hadamard(a.value(), b.value());
  return t.record(OpKind::mul, {a, b}, std::move(value), [](Tape& t, const Record& r) {
    const Matrix& g = out_grad(t, r);
    const std::size_t a_id = r.inputs[0], b_id = r.inputs[1];
    if (t.requires_grad(a_id)) t.accumulate(a_id, fmp::hadamard(g, t.value(b_id)));
    if (t.requires_grad(b_id)) t.accumulate(b_id, fmp::hadamard(g, t.value(a_id)));
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix value(x.rows(), x.cols());
  simd::active_kernels().relu(x.size(), x.data(), value.data());
  return t.record(OpKind::relu, {a}, std::move(value), [](Tape& t, const Record& r) {
    const Matrix& x = t.value(r.inputs[0]);
    const Matrix& g = out_grad(t, r);
    Matrix gx(x.rows(), x.cols());
    simd::active_kernels().relu_backward(x.size(), x.data(), g.data(), gx.data());
    t.accumulate(r.inputs[0], std::move(gx));
  });
}

namespace {

// dx_i = y_i ⊙ g_i − (Σ_k g_ik·y_ik)·y_i, the row-wise product with
// diag(y) − yᵀy.
Matrix softmax_vjp(const Matrix& y, const Matrix& g) {
  Matrix gx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = y(i, j) * g(i, j) - dot * y(i, j);
  }
  return gx;
}

}  // namespace

Var row_softmax(Var a) {
  Tape& t = tape_of(a);
  for (double v : a.value().values())
    require(!std::isnan(v), ErrorCode::numeric, "row_softmax: NaN input");
  Matrix value = fmp::row_softmax(a.value());
  return t.record(OpKind::row_softmax, {a}, std::move(value), [](Tape& t, const Record& r) {
    t.accumulate(r.inputs[0], softmax_vjp(t.value(r.output), out_grad(t, r)));
  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = tape_of(a);
  require(lo <= hi, ErrorCode::invalid_argument, "clamp: lo > hi");
  const Matrix& x = a.value();
  Matrix value(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = x.data()[k];
    value.data()[k] = v < lo ? lo : (v > hi ? hi : v);
  }
  return t.record(OpKind::clamp, {a}, std::move(value), [lo, hi](Tape& t, const Record& r) {
    const Matrix& x = t.value(r.inputs[0]);
    const Matrix& g = out_grad(t, r);
    Matrix gx(x.rows(), x.cols());
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double v = x.data()[k];
      gx.data()[k] = (lo <= v && v <= hi) ? g.data()[k] : 0.0;
    }
    t.accumulate(r.inputs[0], std::move(gx));
  });
}

Var row_sum_broadcast(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix value(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += x(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) value(i, j) = s;
  }
  return t.record(OpKind::row_sum_broadcast, {a}, std::move(value), [](Tape& t, const Record& r) {
    const Matrix& g = out_grad(t, r);
    Matrix gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = s;
    }
    t.accumulate(r.inputs[0], std::move(gx));
  });
}

Var cross_entropy_with_logits(Var logits, std::span<const int> labels,
                              std::span<const std::size_t> nodes) {
  Tape& t = tape_of(logits);
  const Matrix& x = logits.value();
  require(!nodes.empty(), ErrorCode::invalid_argument, "cross_entropy: empty mask");
  require(labels.size() == x.rows(), ErrorCode::dimension_mismatch,
          "cross_entropy: label count does not match logits rows");
  double total = 0.0;
  for (std::size_t i : nodes) {
    require(i < x.rows(), ErrorCode::out_of_range, "cross_entropy: node index out of range");
    const int label = labels[i];
    require(label >= 0 && static_cast<std::size_t>(label) < x.cols(), ErrorCode::out_of_range,
            "cross_entropy: label " + std::to_string(label) + " outside [0, " +
                std::to_string(x.cols()) + ") on node " + std::to_string(i));
    double m = x(i, 0);
    for (std::size_t j = 1; j < x.cols(); ++j) m = std::max(m, x(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += std::exp(x(i, j) - m);
    total += (m + std::log(s)) - x(i, static_cast<std::size_t>(label));
  }
  const double count = static_cast<double>(nodes.size());
  Matrix value(1, 1, total / count);
  std::vector<std::size_t> saved_nodes(nodes.begin(), nodes.end());
  std::vector<int> saved_labels(labels.begin(), labels.end());
  return t.record(
      OpKind::cross_entropy, {logits}, std::move(value),
      [saved_nodes = std::move(saved_nodes), saved_labels = std::move(saved_labels), count](
          Tape& t, const Record& r) {
        const Matrix& x = t.value(r.inputs[0]);
        const double g = out_grad(t, r)(0, 0) / count;
        Matrix gx(x.rows(), x.cols());
        for (std::size_t i : saved_nodes) {
          double m = x(i, 0);
          for (std::size_t j = 1; j < x.cols(); ++j) m = std::max(m, x(i, j));
          double s = 0.0;
          for (std::size_t j = 0; j < x.cols(); ++j) s += std::exp(x(i, j) - m);
          for (std::size_t j = 0; j < x.cols(); ++j) {
            const double p = std::exp(x(i, j) - m) / s;
            const double onehot = static_cast<int>(j) == saved_labels[i] ? 1.0 : 0.0;
            gx(i, j) += g * (p - onehot);
          }
        }
        t.accumulate(r.inputs[0], std::move(gx));
      });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(OpKind::sum, {a}, Matrix(1, 1, s), [](Tape& t, const Record& r) {
    const Matrix& x = t.value(r.inputs[0]);
    t.accumulate(r.inputs[0], Matrix(x.rows(), x.cols(), out_grad(t, r)(0, 0)));
  });
}

Var fairness_grad(Var f, Var u, const IncidentVector& delta) {
  Tape& t = tape_of(f);
  const Matrix& fv = f.value();
  const Matrix& uv = u.value();
  require(uv.rows() == 1 && uv.cols() == fv.cols(), ErrorCode::dimension_mismatch,
          "fairness_grad: dual " + uv.shape_string() + " for features " + fv.shape_string());
  require(delta.size() == fv.rows(), ErrorCode::dimension_mismatch,
          "fairness_grad: incident vector length does not match node count");
  for (double v : fv.values())
    require(!std::isnan(v), ErrorCode::numeric, "fairness_grad: NaN input");
  Matrix prob = fmp::row_softmax(fv);
  Matrix value(fv.rows(), fv.cols());
  simd::active_kernels().fairness_grad(fv.rows(), fv.cols(), prob.data(), delta.values.data(),
                                       uv.data(), value.data());
  return t.record(
      OpKind::fairness_grad, {f, u}, std::move(value),
      [prob = std::move(prob), d = delta.values](Tape& t, const Record& r) {
        const Matrix& h = out_grad(t, r);
        const Matrix& u = t.value(r.inputs[1]);
        const std::size_t n = prob.rows(), k = prob.cols();
        const bool want_f = t.requires_grad(r.inputs[0]);
        const bool want_u = t.requires_grad(r.inputs[1]);
        Matrix gf(n, k);
        Matrix gu(1, k);
        std::vector<double> gy(k);
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;  // Σ_k y_ik u_k
          double c = 0.0;  // Δ_i Σ_j h_ij y_ij
          for (std::size_t j = 0; j < k; ++j) {
            s += prob(i, j) * u(0, j);
            c += h(i, j) * prob(i, j);
          }
          c *= d[i];
          if (want_u)
            for (std::size_t j = 0; j < k; ++j)
              gu(0, j) += d[i] * h(i, j) * prob(i, j) - c * prob(i, j);
          if (want_f) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
              gy[j] = h(i, j) * d[i] * (u(0, j) - s) - c * u(0, j);
              dot += gy[j] * prob(i, j);
            }
            for (std::size_t j = 0; j < k; ++j) gf(i, j) = prob(i, j) * gy[j] - dot * prob(i, j);
          }
        }
        if (want_f) t.accumulate(r.inputs[0], std::move(gf));
        if (want_u) t.accumulate(r.inputs[1], std::move(gu));
      });
}

}  // namespace fmp::ad
