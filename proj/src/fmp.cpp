#include "fmp/fmp.hpp"

#include <cmath>
#include <string>

#include "fmp/error.hpp"
#include "fmp/propagation.hpp"
#include "fmp/simd/kernels.hpp"

namespace fmp {

FmpHyperParams::FmpHyperParams(double lambda_s, double lambda_f, int layers)
    : lambda_s_(lambda_s), lambda_f_(lambda_f), layers_(layers) {
  require(std::isfinite(lambda_s) && lambda_s >= 0.0, ErrorCode::invalid_argument,
          "lambda_s must be a finite value >= 0");
  require(std::isfinite(lambda_f) && lambda_f >= 0.0, ErrorCode::invalid_argument,
          "lambda_f must be a finite value >= 0");
  require(layers >= 0, ErrorCode::invalid_argument, "layer count must be >= 0");
}

Matrix fairness_grad(const Matrix& f_eval, const Matrix& u, const IncidentVector& delta) {
  require(u.rows() == 1 && u.cols() == f_eval.cols(), ErrorCode::dimension_mismatch,
          "fairness_grad: dual " + u.shape_string() + " for features " + f_eval.shape_string());
  require(delta.size() == f_eval.rows(), ErrorCode::dimension_mismatch,
          "fairness_grad: incident vector length does not match node count");
  // Working set: the probabilities and the result, both n×d_out.
  const Matrix prob = fmp::row_softmax(f_eval);
  Matrix out(prob.rows(), prob.cols());
  simd::active_kernels().fairness_grad(prob.rows(), prob.cols(), prob.data(),
                                       delta.values.data(), u.data(), out.data());
  return out;
}

Matrix prox_dual(const Matrix& u_bar, double lambda_f) {
  require(lambda_f >= 0.0, ErrorCode::invalid_argument, "lambda_f must be >= 0");
  Matrix out(u_bar.rows(), u_bar.cols());
  for (std::size_t k = 0; k < u_bar.size(); ++k) {
    const double v = u_bar.data()[k];
    const double mag = std::min(std::abs(v), lambda_f);
    out.data()[k] = v > 0.0 ? mag : (v < 0.0 ? -mag : 0.0);
  }
  return out;
}

FairnessObjective fairness_objective(const Matrix& f, const IncidentVector& delta,
                                     double lambda_f) {
  require(delta.size() == f.rows(), ErrorCode::dimension_mismatch,
          "fairness_objective: incident vector length does not match node count");
  FairnessObjective result;
  result.p = matmul(delta.as_row(), fmp::row_softmax(f));
  double l1 = 0.0;
  for (double v : result.p.values()) l1 += std::abs(v);
  result.value = lambda_f * l1;
  return result;
}

namespace ad {

namespace {

void require_finite(const Var& v, const char* what) {
  require(all_finite(v.value()), ErrorCode::numeric, std::string(what) + " produced non-finite values");
}

}  // namespace

FmpVars fmp_layer_step(const FmpVars& state, Var x_trans, const SparseGraph& g,
                       const IncidentVector& delta, const FmpHyperParams& hp) {
  const double gamma = hp.gamma();
  Tape& tape = *x_trans.tape();
  const Var delta_row = tape.constant(delta.as_row());

  const Var x_agg = skip_aggregate(g, state.f, x_trans, gamma);                        // ①
  const Var f_bar = sub(x_agg, scale(fairness_grad(state.f, state.u, delta), gamma));  // ②
  const Var u_bar = add(state.u, scale(matmul(delta_row, row_softmax(f_bar)), hp.beta()));  // ③
  const Var u_next = clamp(u_bar, -hp.lambda_f(), hp.lambda_f());                      // ④
  const Var f_next = sub(x_agg, scale(fairness_grad(state.f, u_next, delta), gamma));  // ⑤

  require_finite(f_next, "fmp layer");
  return {f_next, u_next};
}

Var fmp_propagate(Var x_trans, const SparseGraph& g, const IncidentVector& delta,
                  const FmpHyperParams& hp, std::vector<Matrix>* duals) {
  require(x_trans.rows() == g.num_nodes(), ErrorCode::dimension_mismatch,
          "fmp: feature rows do not match node count");
  Tape& tape = *x_trans.tape();
  FmpVars state{x_trans, tape.constant(Matrix(1, x_trans.cols()))};
  for (int k = 0; k < hp.layers(); ++k) {
    state = fmp_layer_step(state, x_trans, g, delta, hp);
    if (duals) duals->push_back(state.u.value());
  }
  return state.f;
}

Var ml1_step(Var f, Var x_trans, const SparseGraph& g, const IncidentVector& delta,
             const FmpHyperParams& hp) {
  const Matrix p = fmp::fairness_objective(f.value(), delta, 1.0).p;
  Matrix u(1, p.cols());
  for (std::size_t j = 0; j < p.cols(); ++j) {
    const double v = p(0, j);
    u(0, j) = hp.lambda_f() * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
  }
  const Var x_agg = skip_aggregate(g, f, x_trans, hp.gamma());
  const Var out =
      sub(x_agg, scale(fairness_grad(f, f.tape()->constant(std::move(u)), delta), hp.gamma()));
  require_finite(out, "ml1 step");
  return out;
}

Var ml1_propagate(Var x_trans, const SparseGraph& g, const IncidentVector& delta,
                  const FmpHyperParams& hp) {
  Var f = x_trans;
  for (int k = 0; k < hp.layers(); ++k) f = ml1_step(f, x_trans, g, delta, hp);
  return f;
}

Var fairness_grad_composite(Var f, Var u, const IncidentVector& delta) {
  Tape& tape = *f.tape();
  const Var u_s = matmul(tape.constant(delta.as_column()), u);  // Δ_sᵀu: n×d_out
  const Var y = row_softmax(f);
  const Var weighted = mul(u_s, y);
  return sub(weighted, mul(row_sum_broadcast(weighted), y));
}

}  // namespace ad

FmpState fmp_layer_step(const FmpState& state, const Matrix& x_trans, const SparseGraph& g,
                        const IncidentVector& delta, const FmpHyperParams& hp) {
  ad::Tape tape;
  const ad::FmpVars next = ad::fmp_layer_step({tape.constant(state.f), tape.constant(state.u)},
                                              tape.constant(x_trans), g, delta, hp);
  return {next.f.value(), next.u.value()};
}

Matrix ml1_step(const Matrix& f, const Matrix& x_trans, const SparseGraph& g,
                const IncidentVector& delta, const FmpHyperParams& hp) {
  ad::Tape tape;
  return ad::ml1_step(tape.constant(f), tape.constant(x_trans), g, delta, hp).value();
}

Matrix fmp_forward(const Mlp& mlp, const Matrix& x_ori, const SparseGraph& g,
                   const IncidentVector& delta, const FmpHyperParams& hp) {
  ad::Tape tape;
  const MlpBinding binding = bind(tape, mlp, false);
  const ad::Var x_trans = mlp_forward(binding, tape.constant(x_ori));
  return ad::fmp_propagate(x_trans, g, delta, hp).value();
}

}  // namespace fmp
