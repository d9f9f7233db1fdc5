#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmp/matrix.hpp"

namespace fmp {

// Node subsets are passed as index lists; `nodes` plays the role of a mask.

// Row argmax; ties go to the lower class index.
std::vector<int> predict_labels(const Matrix& logits);

// |P(ŷ=1 | s=−1) − P(ŷ=1 | s=+1)| over `nodes`. Throws ErrorCode::empty_group
// when either group has no node in the subset.
double demographic_parity(std::span<const int> y_hat, std::span<const int> sensitive,
                          std::span<const std::size_t> nodes);

// |P(ŷ=1 | s=−1, y=1) − P(ŷ=1 | s=+1, y=1)|. Throws ErrorCode::empty_group
// when either group has no positive-label node in the subset.
double equal_opportunity(std::span<const int> y_hat, std::span<const int> labels,
                         std::span<const int> sensitive, std::span<const std::size_t> nodes);

double accuracy(std::span<const int> y_hat, std::span<const int> labels,
                std::span<const std::size_t> nodes);

struct MetricsReport {
  double accuracy = 0.0;
  double dp = 0.0;            // NaN when undefined on the subset
  double eo = 0.0;            // NaN when undefined on the subset
  double fairness_obj = 0.0;  // ‖Δ_s·SF(F)‖₁ with Δ_s built on the subset
  std::size_t n_eval = 0;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::string scheme;
  double lambda_s = 0.0;
  double lambda_f = 0.0;
  double wall_time_ms = 0.0;
  // Validation metrics of the selected checkpoint; used for model selection.
  double val_accuracy = 0.0;
  double val_dp = 0.0;
  std::string status = "ok";
};

// Accuracy, gaps and fairness objective of `logits` on `nodes`.
MetricsReport compute_metrics(const Matrix& logits, std::span<const int> labels,
                              std::span<const int> sensitive, std::span<const std::size_t> nodes);

}  // namespace fmp
