#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fmp/data.hpp"
#include "fmp/graph.hpp"
#include "fmp/metrics.hpp"
#include "fmp/nn.hpp"
#include "fmp/propagation.hpp"
#include "json.hpp"

namespace fmp {

// Either a node CSV + edge file pair with its schema, or a synthetic config.
struct DatasetSource {
  std::filesystem::path nodes;
  std::filesystem::path edges;
  NodeSchema schema;
  std::string name;
  std::optional<SynthConfig> synth;
  bool standardize = true;
  std::optional<std::size_t> train_label_limit;
};

struct ModelParams {
  Scheme scheme = Scheme::fmp;
  double lambda_s = 1.0;
  double lambda_f = 10.0;
  int layers = 2;       // propagation depth K
  double alpha = 0.1;   // appnp / ppnp teleport
};

enum class Selection { best_val, last };

struct RunConfig {
  DatasetSource dataset;
  ModelParams model;
  std::size_t hidden = 64;
  int mlp_layers = 2;  // linear layers, so mlp_layers − 1 hidden layers
  AdamConfig optimizer;
  int epochs = 300;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  SplitFractions split;
  Selection selection = Selection::best_val;
  std::filesystem::path output_dir = "fmp_out";
  std::string results = "results.csv";
};

void validate(const RunConfig& config);

// Unknown keys are rejected. `base` resolves relative dataset paths.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

// FNV-1a over the canonical JSON of every field except seeds and output.
std::string config_fingerprint(const RunConfig& config);

// FMP_OUTPUT_DIR, when set, replaces config.output_dir.
std::filesystem::path output_dir(const RunConfig& config);

Dataset load_run_dataset(const DatasetSource& source);

// Per-column zero mean and unit variance over `nodes`; constant columns are
// only centered.
Matrix standardize(const Matrix& x, std::span<const std::size_t> nodes);

struct TrainTrace {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  std::vector<double> val_dp;  // NaN when undefined
  std::size_t best_epoch = 0;
};

struct TrainResult {
  Mlp checkpoint;
  MetricsReport report;
  TrainTrace trace;
};

enum class MaskChoice { train, val, test };
MaskChoice parse_mask(std::string_view name);

// The forward computation of one configured scheme on one dataset and split.
class Model {
 public:
  Model(const RunConfig& config, const Dataset& dataset, const SplitMasks& masks);

  const SparseGraph& graph() const noexcept { return *graph_; }
  const Matrix& input() const noexcept { return input_; }
  const IncidentVector& delta() const noexcept { return delta_; }

  MlpConfig mlp_config() const;
  ad::Var forward(ad::Tape& tape, const MlpBinding& params) const;
  Matrix logits(const Mlp& mlp) const;

 private:
  ModelParams params_;
  std::size_t hidden_;
  int mlp_layers_;
  const SparseGraph* graph_;
  Matrix input_;  // standardized features, or Ã^K·X for sgc
  IncidentVector delta_;
  Matrix ppnp_;   // dense operator, ppnp only
};

// One seed. Deterministic in (config, seed).
TrainResult train_run(const RunConfig& config, const Dataset& dataset, std::uint64_t seed);

// Metrics of `mlp` on the chosen mask; weights are not touched.
MetricsReport evaluate(const RunConfig& config, const Mlp& mlp, const Dataset& dataset,
                       const SplitMasks& masks, MaskChoice mask = MaskChoice::test);

struct SweepGrid {
  std::vector<double> lambda_s{0, 0.01, 0.1, 0.5, 1, 2, 3, 5, 10, 15, 20};
  std::vector<double> lambda_f{0, 5, 10, 15, 20, 30, 100};
  // Selected point: lowest mean validation Δ_DP among points whose mean
  // validation accuracy is within this margin of the best.
  double selection_tolerance = 0.02;
  int jobs = 1;
};

SweepGrid sweep_grid_from_json(const nlohmann::json& doc);

struct SweepPoint {
  std::string scheme;
  double lambda_s = 0.0;
  double lambda_f = 0.0;
  std::string fingerprint;
  std::size_t runs = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double dp_mean = 0.0, dp_std = 0.0;
  double eo_mean = 0.0, eo_std = 0.0;
  double val_acc_mean = 0.0, val_dp_mean = 0.0;
  bool pareto = false;
  bool selected = false;
};

struct SweepSummary {
  std::filesystem::path results;
  std::filesystem::path summary;
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::vector<SweepPoint> points;
};

// One run per grid point and seed. Rows are appended as runs finish; rows whose
// (fingerprint, seed) already exist are not rerun; failures become rows with a
// non-ok status. Writes <results stem>_summary.csv next to the results.
SweepSummary sweep(const RunConfig& config, const SweepGrid& grid, const Dataset& dataset);

// Aggregates ok rows per fingerprint; mean ± sample standard deviation.
std::vector<SweepPoint> summarize(std::span<const MetricsReport> rows, double selection_tolerance);
void write_summary(const std::filesystem::path& path, std::span<const SweepPoint> points);

// Predictions CSV with columns id,pred; truth CSV with id,label,sensitive
// (sensitive 1 or +1 maps to +1, anything else to −1).
MetricsReport metrics_from_files(const std::filesystem::path& pred, const std::filesystem::path& truth);

// Sample mean and standard deviation (0 for a single value).
std::pair<double, double> mean_std(std::span<const double> values);

}  // namespace fmp
