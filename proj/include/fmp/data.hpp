#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmp/graph.hpp"
#include "fmp/matrix.hpp"
#include "fmp/metrics.hpp"
#include "json.hpp"

namespace fmp {

inline constexpr int kMissingLabel = -1;

struct Dataset {
  std::string name;
  SparseGraph graph;
  Matrix features;  // n×d, sensitive column excluded
  std::vector<std::string> feature_names;
  std::vector<std::string> node_ids;
  std::vector<int> sensitive;  // ±1
  std::vector<int> labels;     // kMissingLabel when unlabeled

  std::size_t num_nodes() const noexcept { return sensitive.size(); }
  std::vector<std::size_t> labeled_nodes() const;
};

void validate(const Dataset& dataset);

// Column roles of a node CSV. Every column that is not the id, sensitive or
// label column and is not listed in `drop` becomes a feature.
struct NodeSchema {
  std::string id = "id";
  std::string sensitive = "sensitive";
  nlohmann::json sensitive_pos_value = 1;  // raw value mapped to s = +1
  std::string label = "label";
  std::vector<std::string> drop;
  // Maps every label value > 1 to 1 (multi-valued Pokec-style targets).
  bool binarize_labels = false;
};

NodeSchema schema_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const NodeSchema& schema);

// Nodes are indexed in file order. Empty or negative label cells are marked
// missing. The edge file holds one id pair per line separated by whitespace or
// a comma; '#' starts a comment.
Dataset load_dataset(const std::filesystem::path& node_csv, const std::filesystem::path& edges,
                     const NodeSchema& schema, std::string name = {});

// Writes nodes.csv, edges.txt and schema.json into `dir`; load_dataset on the
// three files reproduces the dataset.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct SplitFractions {
  double train = 0.5;
  double val = 0.25;
  double test = 0.25;
};

struct SplitMasks {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  std::vector<bool> mask(const std::vector<std::size_t>& nodes, std::size_t n) const;
};

// Shuffles the labeled nodes with `seed` and slices them: train and val get
// floor(fraction·n_labeled), test takes the remainder. `train_limit` then keeps
// only the first nodes of the training slice.
SplitMasks make_splits(const Dataset& dataset, const SplitFractions& fractions, std::uint64_t seed,
                       std::optional<std::size_t> train_limit = std::nullopt);

// Two sensitive groups; each edge joins nodes of the same group with
// probability sens_homophily and nodes of the same label with probability
// label_homophily. Labels follow the group with strength
// label_sensitive_corr: P(y=1 | s=±1) = (1 ± corr)/2.
struct SynthConfig {
  std::size_t n = 2000;
  double positive_fraction = 0.5;
  double sens_homophily = 0.9;
  double label_homophily = 0.8;
  double mean_degree = 10.0;
  std::size_t feature_dim = 16;
  double class_shift = 1.0;
  double group_shift = 1.0;
  double label_sensitive_corr = 0.5;
  std::uint64_t seed = 0;
  double homophily_tolerance = 0.05;
  int max_attempts = 20;
};

void validate(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SynthConfig& config);

// Throws ErrorCode::infeasible when the homophily pair cannot be realized
// within max_attempts edge draws.
Dataset synth_generate(const SynthConfig& config);

// Results CSV. The first nine columns are seed, scheme, lambda_s, lambda_f,
// acc, dp, eo, fairness_obj, wall_time_ms.
extern const char* const kResultsHeader;

// Append mode writes the header only when the file is new or empty.
void write_results(const std::filesystem::path& path, std::span<const MetricsReport> reports,
                   bool append = false);
std::vector<MetricsReport> read_results(const std::filesystem::path& path);

}  // namespace fmp
