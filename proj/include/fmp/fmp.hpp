#pragma once

// Fair message passing: each layer aggregates with a skip connection and then
// runs one predictor-corrector round on the dual perturbation u, which is
// capped to the l∞ ball of radius λ_f.
//
//   ① X_agg = γ·X_trans + (1−γ)·Ã·F^k
//   ② F̄     = X_agg − γ·∇_F⟨Δ_s·SF(F), u^k⟩ at F^k
//   ③ ū     = u^k + β·Δ_s·SF(F̄)
//   ④ u^k+1 = clamp(ū, −λ_f, λ_f)
//   ⑤ F^k+1 = X_agg − γ·∇_F⟨Δ_s·SF(F), u^k+1⟩ at F^k
//
// with γ = 1/(1+λ_s) and β = 1/(2γ).

#include <vector>

#include "fmp/autodiff.hpp"
#include "fmp/graph.hpp"
#include "fmp/matrix.hpp"
#include "fmp/nn.hpp"

namespace fmp {

class FmpHyperParams {
 public:
  FmpHyperParams(double lambda_s, double lambda_f, int layers);

  double lambda_s() const noexcept { return lambda_s_; }
  double lambda_f() const noexcept { return lambda_f_; }
  int layers() const noexcept { return layers_; }
  // Primal step 1/(1+λ_s), in (0, 1].
  double gamma() const noexcept { return 1.0 / (1.0 + lambda_s_); }
  // Dual step 1/(2γ) = (1+λ_s)/2.
  double beta() const noexcept { return (1.0 + lambda_s_) / 2.0; }

 private:
  double lambda_s_;
  double lambda_f_;
  int layers_;
};

struct FmpState {
  Matrix f;  // n×d_out
  Matrix u;  // 1×d_out
};

// ∂⟨Δ_s·SF(F), u⟩/∂F = U_s ⊙ SF(F) − Sum₁(U_s ⊙ SF(F)) ⊙ SF(F), U_s = Δ_sᵀu.
// O(n·d_out) time and memory.
Matrix fairness_grad(const Matrix& f_eval, const Matrix& u, const IncidentVector& delta);

// Projection onto the l∞ ball: sign(ū_j)·min(|ū_j|, λ_f).
Matrix prox_dual(const Matrix& u_bar, double lambda_f);

FmpState fmp_layer_step(const FmpState& state, const Matrix& x_trans, const SparseGraph& g,
                        const IncidentVector& delta, const FmpHyperParams& hp);

// F' = γX_trans + (1−γ)ÃF − γ·∇_F⟨Δ_s·SF(F), λ_f·sign(p)⟩ with p = Δ_s·SF(F).
Matrix ml1_step(const Matrix& f, const Matrix& x_trans, const SparseGraph& g,
                const IncidentVector& delta, const FmpHyperParams& hp);

struct FairnessObjective {
  double value = 0.0;  // λ_f·‖p‖₁
  Matrix p;            // Δ_s·SF(F), 1×d_out
};

FairnessObjective fairness_objective(const Matrix& f, const IncidentVector& delta,
                                     double lambda_f);

namespace ad {

struct FmpVars {
  Var f;
  Var u;
};

// ①–⑤ on the tape; the clamp of ④ carries the pass-through subgradient.
// Throws ErrorCode::numeric if the new state is not finite.
FmpVars fmp_layer_step(const FmpVars& state, Var x_trans, const SparseGraph& g,
                       const IncidentVector& delta, const FmpHyperParams& hp);

// F⁰ = X_trans, u⁰ = 0, then hp.layers() layer steps. When `duals` is given
// it receives u after every layer.
Var fmp_propagate(Var x_trans, const SparseGraph& g, const IncidentVector& delta,
                  const FmpHyperParams& hp, std::vector<Matrix>* duals = nullptr);

// The sign of p is treated as a constant.
Var ml1_step(Var f, Var x_trans, const SparseGraph& g, const IncidentVector& delta,
             const FmpHyperParams& hp);
Var ml1_propagate(Var x_trans, const SparseGraph& g, const IncidentVector& delta,
                  const FmpHyperParams& hp);

// The closed form assembled from generic primitives
// (matmul, mul, row_sum_broadcast, sub). Independent second route for the
// fused ad::fairness_grad.
Var fairness_grad_composite(Var f, Var u, const IncidentVector& delta);

}  // namespace ad

// Logits F^K for MLP transform followed by hp.layers() FMP layers.
Matrix fmp_forward(const Mlp& mlp, const Matrix& x_ori, const SparseGraph& g,
                   const IncidentVector& delta, const FmpHyperParams& hp);

}  // namespace fmp
