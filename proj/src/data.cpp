#include "fmp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"
#include "fmp/error.hpp"
#include "fmp/rng.hpp"

namespace fmp {

std::vector<std::size_t> Dataset::labeled_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kMissingLabel) out.push_back(i);
  return out;
}

void validate(const Dataset& d) {
  const std::size_t n = d.graph.num_nodes();
  require(d.features.rows() == n && d.labels.size() == n && d.sensitive.size() == n,
          ErrorCode::dimension_mismatch,
          "dataset '" + d.name + "': features, labels, sensitive and graph disagree on n");
  require(d.feature_names.size() == d.features.cols(), ErrorCode::dimension_mismatch,
          "dataset '" + d.name + "': feature name count does not match columns");
  require(d.node_ids.size() == n, ErrorCode::dimension_mismatch,
          "dataset '" + d.name + "': node id count does not match n");
  bool pos = false, neg = false;
  for (int s : d.sensitive) {
    require(s == 1 || s == -1, ErrorCode::invalid_argument, "sensitive values must be +1 or -1");
    pos = pos || s == 1;
    neg = neg || s == -1;
  }
  require(pos && neg, ErrorCode::empty_group,
          "dataset '" + d.name + "': sensitive attribute takes a single value");
}

NodeSchema schema_from_json(const nlohmann::json& doc) {
  try {
    NodeSchema s;
    s.id = doc.at("id").get<std::string>();
    s.sensitive = doc.at("sensitive").get<std::string>();
    s.sensitive_pos_value = doc.at("sensitive_pos_value");
    s.label = doc.at("label").get<std::string>();
    if (doc.contains("drop")) s.drop = doc.at("drop").get<std::vector<std::string>>();
    if (doc.contains("binarize_labels")) s.binarize_labels = doc.at("binarize_labels").get<bool>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed schema: ") + e.what());
  }
}

nlohmann::json to_json(const NodeSchema& s) {
  return {{"id", s.id},
          {"sensitive", s.sensitive},
          {"sensitive_pos_value", s.sensitive_pos_value},
          {"label", s.label},
          {"drop", s.drop},
          {"binarize_labels", s.binarize_labels}};
}

namespace {

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::string& file) {
  const auto it = std::find(header.begin(), header.end(), name);
  require(it != header.end(), ErrorCode::parse, file + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool is_positive_sensitive(const std::string& cell, const nlohmann::json& pos_value) {
  if (pos_value.is_number()) {
    double v = 0.0;
    return csv::parse_double(cell, v) && v == pos_value.get<double>();
  }
  if (pos_value.is_boolean()) return csv::trim(cell) == (pos_value.get<bool>() ? "true" : "false");
  return csv::trim(cell) == pos_value.get<std::string>();
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& node_csv, const std::filesystem::path& edges,
                     const NodeSchema& schema, std::string name) {
  std::ifstream in(node_csv);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open node file " + node_csv.string());
  const std::string file = node_csv.filename().string();

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::parse, file + ": empty file");
  const std::vector<std::string> header = [&] {
    auto h = csv::split_line(line);
    for (auto& c : h) c = csv::trim(c);
    return h;
  }();
  const std::size_t id_col = column_index(header, schema.id, file);
  const std::size_t sens_col = column_index(header, schema.sensitive, file);
  const std::size_t label_col = column_index(header, schema.label, file);
  for (const auto& d : schema.drop) column_index(header, d, file);

  std::vector<std::size_t> feature_cols;
  Dataset ds;
  ds.name = name.empty() ? node_csv.stem().string() : std::move(name);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == id_col || c == sens_col || c == label_col) continue;
    if (std::find(schema.drop.begin(), schema.drop.end(), header[c]) != schema.drop.end()) continue;
    feature_cols.push_back(c);
    ds.feature_names.push_back(header[c]);
  }

  std::vector<double> features;
  std::unordered_map<std::string, std::size_t> index_of;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split_line(line);
    const std::string where = file + ":" + std::to_string(line_no);
    require(cells.size() == header.size(), ErrorCode::parse,
            where + ": expected " + std::to_string(header.size()) + " cells, got " +
                std::to_string(cells.size()));
    const std::string id = csv::trim(cells[id_col]);
    require(index_of.emplace(id, ds.node_ids.size()).second, ErrorCode::parse,
            where + ": duplicate node id '" + id + "'");
    ds.node_ids.push_back(id);
    ds.sensitive.push_back(is_positive_sensitive(cells[sens_col], schema.sensitive_pos_value) ? 1 : -1);

    const std::string label_cell = csv::trim(cells[label_col]);
    int label = kMissingLabel;
    if (!label_cell.empty()) {
      double v = 0.0;
      require(csv::parse_double(label_cell, v) && v == std::floor(v), ErrorCode::parse,
              where + ": label '" + label_cell + "' is not an integer");
      if (v >= 0.0) label = static_cast<int>(schema.binarize_labels && v > 1.0 ? 1.0 : v);
    }
    ds.labels.push_back(label);

    for (std::size_t c : feature_cols) {
      double v = 0.0;
      require(csv::parse_double(cells[c], v), ErrorCode::parse,
              where + ": non-numeric feature '" + header[c] + "' = '" + cells[c] + "'");
      features.push_back(v);
    }
  }
  const std::size_t n = ds.node_ids.size();
  require(n > 0, ErrorCode::parse, file + ": no node rows");
  ds.features = Matrix(n, feature_cols.size(), std::move(features));

  std::ifstream ein(edges);
  require(static_cast<bool>(ein), ErrorCode::io, "cannot open edge file " + edges.string());
  std::vector<Edge> edge_list;
  line_no = 0;
  while (std::getline(ein, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream tokens(line);
    std::string a, b, extra;
    if (!(tokens >> a)) continue;
    const std::string where = edges.filename().string() + ":" + std::to_string(line_no);
    require(static_cast<bool>(tokens >> b) && !(tokens >> extra), ErrorCode::parse,
            where + ": expected exactly two node ids");
    const auto ia = index_of.find(a);
    const auto ib = index_of.find(b);
    require(ia != index_of.end(), ErrorCode::parse, where + ": unknown node id '" + a + "'");
    require(ib != index_of.end(), ErrorCode::parse, where + ": unknown node id '" + b + "'");
    edge_list.emplace_back(ia->second, ib->second);
  }
  ds.graph = build_graph(n, edge_list);
  validate(ds);
  return ds;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  validate(d);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "nodes.csv");
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + (dir / "nodes.csv").string());
    out << "id";
    for (const auto& f : d.feature_names) out << ',' << csv::quote(f);
    out << ",sensitive,label\n";
    for (std::size_t i = 0; i < d.num_nodes(); ++i) {
      out << csv::quote(d.node_ids[i]);
      for (double v : d.features.row(i)) out << ',' << csv::format_double(v);
      out << ',' << d.sensitive[i] << ',';
      if (d.labels[i] != kMissingLabel) out << d.labels[i];
      out << '\n';
    }
    require(static_cast<bool>(out), ErrorCode::io, "failed writing nodes.csv");
  }
  {
    std::ofstream out(dir / "edges.txt");
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + (dir / "edges.txt").string());
    for (auto [a, b] : d.graph.edges()) out << d.node_ids[a] << ' ' << d.node_ids[b] << '\n';
    require(static_cast<bool>(out), ErrorCode::io, "failed writing edges.txt");
  }
  {
    NodeSchema schema;  // id / sensitive (+1) / label
    std::ofstream out(dir / "schema.json");
    require(static_cast<bool>(out), ErrorCode::io, "cannot write schema.json");
    out << to_json(schema).dump(2) << '\n';
  }
}

std::vector<bool> SplitMasks::mask(const std::vector<std::size_t>& nodes, std::size_t n) const {
  std::vector<bool> m(n, false);
  for (std::size_t i : nodes) m.at(i) = true;
  return m;
}

SplitMasks make_splits(const Dataset& dataset, const SplitFractions& f, std::uint64_t seed,
                       std::optional<std::size_t> train_limit) {
  require(f.train >= 0.0 && f.val >= 0.0 && f.test >= 0.0 &&
              std::abs(f.train + f.val + f.test - 1.0) < 1e-9,
          ErrorCode::invalid_argument, "split fractions must be nonnegative and sum to 1");
  std::vector<std::size_t> labeled = dataset.labeled_nodes();
  require(labeled.size() >= 4, ErrorCode::invalid_argument,
          "need at least 4 labeled nodes to split, have " + std::to_string(labeled.size()));
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(labeled));

  const auto total = static_cast<double>(labeled.size());
  const auto n_train = static_cast<std::size_t>(std::floor(f.train * total + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(f.val * total + 1e-9));
  SplitMasks masks;
  masks.seed = seed;
  masks.train.assign(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_train));
  masks.val.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_train),
                   labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  masks.test.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), labeled.end());
  if (train_limit && *train_limit < masks.train.size()) masks.train.resize(*train_limit);
  return masks;
}

void validate(const SynthConfig& c) {
  require(c.n >= 4, ErrorCode::invalid_argument, "synthetic graph needs n >= 4");
  require(c.positive_fraction > 0.0 && c.positive_fraction < 1.0, ErrorCode::invalid_argument,
          "positive_fraction must lie in (0, 1)");
  require(c.sens_homophily >= 0.0 && c.sens_homophily <= 1.0, ErrorCode::invalid_argument,
          "sens_homophily must lie in [0, 1]");
  require(c.label_homophily >= 0.0 && c.label_homophily <= 1.0, ErrorCode::invalid_argument,
          "label_homophily must lie in [0, 1]");
  require(c.label_sensitive_corr >= 0.0 && c.label_sensitive_corr <= 1.0,
          ErrorCode::invalid_argument, "label_sensitive_corr must lie in [0, 1]");
  require(c.mean_degree > 0.0, ErrorCode::invalid_argument, "mean_degree must be positive");
  require(c.feature_dim >= 1, ErrorCode::invalid_argument, "feature_dim must be >= 1");
  require(c.max_attempts >= 1, ErrorCode::invalid_argument, "max_attempts must be >= 1");
}

SynthConfig synth_config_from_json(const nlohmann::json& doc) {
  SynthConfig c;
  try {
    c.n = doc.value("n", c.n);
    c.positive_fraction = doc.value("positive_fraction", c.positive_fraction);
    c.sens_homophily = doc.value("sens_homophily", c.sens_homophily);
    c.label_homophily = doc.value("label_homophily", c.label_homophily);
    c.mean_degree = doc.value("mean_degree", c.mean_degree);
    c.feature_dim = doc.value("feature_dim", c.feature_dim);
    c.class_shift = doc.value("class_shift", c.class_shift);
    c.group_shift = doc.value("group_shift", c.group_shift);
    c.label_sensitive_corr = doc.value("label_sensitive_corr", c.label_sensitive_corr);
    c.seed = doc.value("seed", c.seed);
    c.homophily_tolerance = doc.value("homophily_tolerance", c.homophily_tolerance);
    c.max_attempts = doc.value("max_attempts", c.max_attempts);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed synth config: ") + e.what());
  }
  validate(c);
  return c;
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n", c.n},
          {"positive_fraction", c.positive_fraction},
          {"sens_homophily", c.sens_homophily},
          {"label_homophily", c.label_homophily},
          {"mean_degree", c.mean_degree},
          {"feature_dim", c.feature_dim},
          {"class_shift", c.class_shift},
          {"group_shift", c.group_shift},
          {"label_sensitive_corr", c.label_sensitive_corr},
          {"seed", c.seed},
          {"homophily_tolerance", c.homophily_tolerance},
          {"max_attempts", c.max_attempts}};
}

namespace {

std::vector<double> unit_direction(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

Dataset synth_generate(const SynthConfig& c) {
  validate(c);
  Rng rng(c.seed);
  const std::size_t n = c.n;
  const auto n_pos = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(c.positive_fraction * static_cast<double>(n))), 1, n - 1);

  Dataset ds;
  ds.name = "synth";
  ds.sensitive.assign(n, -1);
  std::fill(ds.sensitive.begin(), ds.sensitive.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
  rng.shuffle(std::span<int>(ds.sensitive));

  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    ds.labels[i] = rng.bernoulli((1.0 + c.label_sensitive_corr * ds.sensitive[i]) / 2.0) ? 1 : 0;

  const std::vector<double> class_dir = unit_direction(rng, c.feature_dim);
  const std::vector<double> group_dir = unit_direction(rng, c.feature_dim);
  ds.features = Matrix(n, c.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double y_sign = ds.labels[i] == 1 ? 1.0 : -1.0;
    const double s_sign = static_cast<double>(ds.sensitive[i]);
    for (std::size_t j = 0; j < c.feature_dim; ++j)
      ds.features(i, j) = rng.normal() + c.class_shift * y_sign * class_dir[j] +
                          c.group_shift * s_sign * group_dir[j];
  }
  for (std::size_t j = 0; j < c.feature_dim; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) ds.node_ids.push_back(std::to_string(i));

  // Nodes bucketed by (group, label); group 0 is s = +1.
  std::vector<std::size_t> bucket[2][2];
  for (std::size_t i = 0; i < n; ++i) bucket[ds.sensitive[i] == 1 ? 0 : 1][ds.labels[i]].push_back(i);

  const double max_edges = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const auto target =
      static_cast<std::size_t>(std::llround(std::min(c.mean_degree * static_cast<double>(n) / 2.0, max_edges)));
  const std::size_t draw_limit = 50 * target + 1000;

  double last_measured = -1.0;
  for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
    std::unordered_set<std::uint64_t> seen;
    std::vector<Edge> edges;
    edges.reserve(target);
    for (std::size_t draws = 0; edges.size() < target && draws < draw_limit; ++draws) {
      const bool same_group = rng.bernoulli(c.sens_homophily);
      const bool same_label = rng.bernoulli(c.label_homophily);
      const std::size_t i = static_cast<std::size_t>(rng.below(n));
      const int gi = ds.sensitive[i] == 1 ? 0 : 1;
      const auto& pool = bucket[same_group ? gi : 1 - gi][same_label ? ds.labels[i] : 1 - ds.labels[i]];
      if (pool.empty()) continue;
      const std::size_t j = pool[static_cast<std::size_t>(rng.below(pool.size()))];
      if (j == i) continue;
      const std::uint64_t key = static_cast<std::uint64_t>(std::min(i, j)) * n + std::max(i, j);
      if (!seen.insert(key).second) continue;
      edges.emplace_back(i, j);
    }
    if (edges.size() < target) continue;
    SparseGraph g = build_graph(n, edges);
    last_measured = edge_homophily(g, ds.labels);
    if (std::abs(last_measured - c.label_homophily) <= c.homophily_tolerance) {
      ds.graph = std::move(g);
      validate(ds);
      return ds;
    }
  }
  fail(ErrorCode::infeasible,
       "cannot realize sens_homophily=" + csv::format_double(c.sens_homophily) +
           " with label_homophily=" + csv::format_double(c.label_homophily) + " after " +
           std::to_string(c.max_attempts) + " attempts (last measured label homophily " +
           csv::format_double(last_measured) + ")");
}

const char* const kResultsHeader =
    "seed,scheme,lambda_s,lambda_f,acc,dp,eo,fairness_obj,wall_time_ms,n_eval,val_acc,val_dp,"
    "fingerprint,status";

void write_results(const std::filesystem::path& path, std::span<const MetricsReport> reports,
                   bool append) {
  const bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write results " + path.string());
  if (fresh) out << kResultsHeader << '\n';
  for (const MetricsReport& r : reports) {
    out << r.seed << ',' << csv::quote(r.scheme) << ',' << csv::format_double(r.lambda_s) << ','
        << csv::format_double(r.lambda_f) << ',' << csv::format_double(r.accuracy) << ','
        << csv::format_double(r.dp) << ',' << csv::format_double(r.eo) << ','
        << csv::format_double(r.fairness_obj) << ',' << csv::format_double(r.wall_time_ms) << ','
        << r.n_eval << ',' << csv::format_double(r.val_accuracy) << ','
        << csv::format_double(r.val_dp) << ',' << csv::quote(r.config_fingerprint) << ','
        << csv::quote(r.status) << '\n';
  }
  out.flush();
  require(static_cast<bool>(out), ErrorCode::io, "failed writing results " + path.string());
}

std::vector<MetricsReport> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot read results " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && csv::trim(line) == kResultsHeader,
          ErrorCode::parse, path.string() + ": missing results header");
  std::vector<MetricsReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split_line(line);
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    require(cells.size() == 14, ErrorCode::parse, where + ": expected 14 cells");
    MetricsReport r;
    double seed = 0.0, n_eval = 0.0;
    const bool ok = csv::parse_double(cells[0], seed) && csv::parse_double(cells[2], r.lambda_s) &&
                    csv::parse_double(cells[3], r.lambda_f) && csv::parse_double(cells[4], r.accuracy) &&
                    csv::parse_double(cells[5], r.dp) && csv::parse_double(cells[6], r.eo) &&
                    csv::parse_double(cells[7], r.fairness_obj) &&
                    csv::parse_double(cells[8], r.wall_time_ms) && csv::parse_double(cells[9], n_eval) &&
                    csv::parse_double(cells[10], r.val_accuracy) && csv::parse_double(cells[11], r.val_dp);
    require(ok, ErrorCode::parse, where + ": malformed numeric cell");
    require(std::stoull(csv::trim(cells[0])) == static_cast<std::uint64_t>(seed), ErrorCode::parse,
            where + ": malformed seed");
    r.seed = std::stoull(csv::trim(cells[0]));
    r.scheme = cells[1];
    r.n_eval = static_cast<std::size_t>(n_eval);
    r.config_fingerprint = cells[12];
    r.status = cells[13];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fmp
