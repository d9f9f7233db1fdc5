#include "fmp/propagation.hpp"

#include <Eigen/Dense>

#include "fmp/error.hpp"

namespace fmp {

Scheme parse_scheme(std::string_view name) {
  if (name == "mlp" || name == "mlp_only") return Scheme::mlp;
  if (name == "gcn" || name == "gcn_step") return Scheme::gcn;
  if (name == "sgc" || name == "sgc_k") return Scheme::sgc;
  if (name == "appnp" || name == "appnp_k") return Scheme::appnp;
  if (name == "ppnp" || name == "ppnp_exact") return Scheme::ppnp;
  if (name == "fmp") return Scheme::fmp;
  if (name == "ml1") return Scheme::ml1;
  fail(ErrorCode::invalid_argument, "unknown scheme '" + std::string(name) + "'");
}

const char* scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::mlp: return "mlp";
    case Scheme::gcn: return "gcn";
    case Scheme::sgc: return "sgc";
    case Scheme::appnp: return "appnp";
    case Scheme::ppnp: return "ppnp";
    case Scheme::fmp: return "fmp";
    case Scheme::ml1: return "ml1";
  }
  return "?";
}

void validate(const PropagationConfig& config) {
  const bool iterative = config.scheme == Scheme::sgc || config.scheme == Scheme::appnp;
  require(!iterative || config.k >= 1, ErrorCode::invalid_argument,
          "iterative propagation needs k >= 1");
  require(config.alpha > 0.0 && config.alpha <= 1.0, ErrorCode::invalid_argument,
          "alpha must lie in (0, 1]");
}

Matrix gcn_step(const SparseGraph& g, const Matrix& x) { return spmm(g, x); }

Matrix sgc_propagate(const SparseGraph& g, const Matrix& x, int k) {
  require(k >= 1, ErrorCode::invalid_argument, "sgc needs k >= 1");
  Matrix out = x;
  for (int i = 0; i < k; ++i) out = gcn_step(g, out);
  return out;
}

namespace ad {

Var skip_aggregate(const SparseGraph& g, Var f, Var x_trans, double gamma) {
  require(f.value().same_shape(x_trans.value()), ErrorCode::dimension_mismatch,
          "skip_aggregate: F " + f.value().shape_string() + " vs X_trans " +
              x_trans.value().shape_string());
  return add(scale(x_trans, gamma), scale(spmm(g, f), 1.0 - gamma));
}

Var appnp_step(const SparseGraph& g, Var f, Var x_trans, double alpha) {
  require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_argument, "alpha must lie in (0, 1]");
  return skip_aggregate(g, f, x_trans, alpha);
}

}  // namespace ad

Matrix appnp_step(const SparseGraph& g, const Matrix& f, const Matrix& x_trans, double alpha) {
  ad::Tape tape;
  return ad::appnp_step(g, tape.constant(f), tape.constant(x_trans), alpha).value();
}

Matrix appnp_propagate(const SparseGraph& g, const Matrix& x_trans, double alpha, int k) {
  require(k >= 1, ErrorCode::invalid_argument, "appnp needs k >= 1");
  ad::Tape tape;
  const ad::Var x = tape.constant(x_trans);
  ad::Var f = x;
  for (int i = 0; i < k; ++i) f = ad::appnp_step(g, f, x, alpha);
  return f.value();
}

Matrix ppnp_operator(const SparseGraph& g, double alpha, std::size_t max_nodes) {
  require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_argument, "alpha must lie in (0, 1]");
  const std::size_t n = g.num_nodes();
  require(n <= max_nodes, ErrorCode::invalid_argument,
          "ppnp_exact is a dense solve; n=" + std::to_string(n) + " exceeds cap " +
              std::to_string(max_nodes));
  const auto dim = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(dim, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (auto p = g.row_ptr()[i]; p < g.row_ptr()[i + 1]; ++p)
      system(static_cast<Eigen::Index>(i), g.col_index()[p]) -= (1.0 - alpha) * g.values()[p];
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  // Ã has spectrum in (−1, 1], so the system's eigenvalues are at least alpha.
  const Eigen::MatrixXd inv = alpha * lu.inverse();
  Matrix op(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      op(i, j) = inv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return op;
}

Matrix ppnp_exact(const SparseGraph& g, const Matrix& x_trans, double alpha,
                  std::size_t max_nodes) {
  require(x_trans.rows() == g.num_nodes(), ErrorCode::dimension_mismatch,
          "ppnp_exact: row count mismatch");
  return matmul(ppnp_operator(g, alpha, max_nodes), x_trans);
}

}  // namespace fmp
