#include "fmp/metrics.hpp"

#include <cmath>
#include <limits>

#include "fmp/error.hpp"
#include "fmp/fmp.hpp"

namespace fmp {

std::vector<int> predict_labels(const Matrix& logits) {
  std::vector<int> out(logits.rows(), 0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  require(a == b, ErrorCode::dimension_mismatch, std::string(what) + ": length mismatch");
}

void check_node(std::size_t i, std::size_t n) {
  require(i < n, ErrorCode::out_of_range, "metric node index out of range");
}

// Positive-prediction rates of the +1 and −1 groups among nodes passing `keep`.
template <typename Keep>
std::pair<double, double> group_rates(std::span<const int> y_hat, std::span<const int> sensitive,
                                      std::span<const std::size_t> nodes, Keep keep,
                                      const char* what) {
  std::size_t count[2] = {0, 0};
  std::size_t positive[2] = {0, 0};
  for (std::size_t i : nodes) {
    check_node(i, y_hat.size());
    if (!keep(i)) continue;
    const int group = sensitive[i] == 1 ? 0 : 1;
    count[group] += 1;
    positive[group] += y_hat[i] == 1 ? 1 : 0;
  }
  require(count[0] > 0 && count[1] > 0, ErrorCode::empty_group,
          std::string(what) + " undefined: a sensitive group is empty on this subset");
  return {static_cast<double>(positive[0]) / static_cast<double>(count[0]),
          static_cast<double>(positive[1]) / static_cast<double>(count[1])};
}

}  // namespace

double demographic_parity(std::span<const int> y_hat, std::span<const int> sensitive,
                          std::span<const std::size_t> nodes) {
  check_lengths(y_hat.size(), sensitive.size(), "demographic_parity");
  const auto [pos, neg] =
      group_rates(y_hat, sensitive, nodes, [](std::size_t) { return true; }, "demographic parity");
  return std::abs(neg - pos);
}

double equal_opportunity(std::span<const int> y_hat, std::span<const int> labels,
                         std::span<const int> sensitive, std::span<const std::size_t> nodes) {
  check_lengths(y_hat.size(), sensitive.size(), "equal_opportunity");
  check_lengths(y_hat.size(), labels.size(), "equal_opportunity");
  const auto [pos, neg] = group_rates(
      y_hat, sensitive, nodes, [&](std::size_t i) { return labels[i] == 1; },
      "equal opportunity");
  return std::abs(neg - pos);
}

double accuracy(std::span<const int> y_hat, std::span<const int> labels,
                std::span<const std::size_t> nodes) {
  check_lengths(y_hat.size(), labels.size(), "accuracy");
  require(!nodes.empty(), ErrorCode::invalid_argument, "accuracy: empty mask");
  std::size_t correct = 0;
  for (std::size_t i : nodes) {
    check_node(i, y_hat.size());
    correct += y_hat[i] == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

MetricsReport compute_metrics(const Matrix& logits, std::span<const int> labels,
                              std::span<const int> sensitive, std::span<const std::size_t> nodes) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<int> y_hat = predict_labels(logits);
  MetricsReport report;
  report.n_eval = nodes.size();
  report.accuracy = accuracy(y_hat, labels, nodes);
  try {
    report.dp = demographic_parity(y_hat, sensitive, nodes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::empty_group) throw;
    report.dp = nan;
  }
  try {
    report.eo = equal_opportunity(y_hat, labels, sensitive, nodes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::empty_group) throw;
    report.eo = nan;
  }

  Matrix subset(nodes.size(), logits.cols());
  std::vector<int> subset_s;
  subset_s.reserve(nodes.size());
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    const auto row = logits.row(nodes[r]);
    std::copy(row.begin(), row.end(), subset.row(r).begin());
    subset_s.push_back(sensitive[nodes[r]]);
  }
  try {
    report.fairness_obj = fairness_objective(subset, incident_vector(subset_s), 1.0).value;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::empty_group) throw;
    report.fairness_obj = nan;
  }
  return report;
}

}  // namespace fmp
