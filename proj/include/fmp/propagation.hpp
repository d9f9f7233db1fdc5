#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "fmp/autodiff.hpp"
#include "fmp/graph.hpp"
#include "fmp/matrix.hpp"

namespace fmp {

// Model families selectable from configuration. mlp/gcn/sgc/appnp/ppnp are the
// denoising-derived baselines; fmp and ml1 live in fmp.hpp.
enum class Scheme { mlp, gcn, sgc, appnp, ppnp, fmp, ml1 };

Scheme parse_scheme(std::string_view name);
const char* scheme_name(Scheme scheme);

struct PropagationConfig {
  Scheme scheme = Scheme::appnp;
  int k = 2;
  double alpha = 0.1;
  std::size_t ppnp_max_nodes = 500;
};

void validate(const PropagationConfig& config);

// Ã·X: one gradient step on tr(Fᵀ(I−Ã)F) from F = X.
Matrix gcn_step(const SparseGraph& g, const Matrix& x);
// k applications of gcn_step.
Matrix sgc_propagate(const SparseGraph& g, const Matrix& x, int k);

// (1−α)·Ã·F + α·X_trans
Matrix appnp_step(const SparseGraph& g, const Matrix& f, const Matrix& x_trans, double alpha);
Matrix appnp_propagate(const SparseGraph& g, const Matrix& x_trans, double alpha, int k);

// α·(I − (1−α)Ã)^{-1}·X_trans by dense LU. Throws when n exceeds max_nodes.
Matrix ppnp_exact(const SparseGraph& g, const Matrix& x_trans, double alpha,
                  std::size_t max_nodes = 500);
// The dense operator α·(I − (1−α)Ã)^{-1} itself.
Matrix ppnp_operator(const SparseGraph& g, double alpha, std::size_t max_nodes = 500);

namespace ad {

// γ·X_trans + (1−γ)·Ã·F. Shared by APPNP and the first FMP step so the two
// produce bitwise identical values.
Var skip_aggregate(const SparseGraph& g, Var f, Var x_trans, double gamma);
Var appnp_step(const SparseGraph& g, Var f, Var x_trans, double alpha);

}  // namespace ad
}  // namespace fmp
