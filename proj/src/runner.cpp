#include "fmp/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "csv.hpp"
#include "fmp/error.hpp"
#include "fmp/fmp.hpp"

namespace fmp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using json = nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  require(obj.is_object(), ErrorCode::parse, where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; });
    require(known, ErrorCode::parse, "unknown key '" + key + "' in " + where);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

const char* selection_name(Selection s) { return s == Selection::best_val ? "best_val" : "last"; }

bool uses_lambdas(Scheme s) { return s == Scheme::fmp || s == Scheme::ml1; }
bool uses_alpha(Scheme s) { return s == Scheme::appnp || s == Scheme::ppnp; }
bool uses_depth(Scheme s) {
  return s == Scheme::sgc || s == Scheme::appnp || s == Scheme::fmp || s == Scheme::ml1;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

double nan_if_empty_group(auto&& compute) {
  try {
    return compute();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::empty_group) throw;
    return kNaN;
  }
}

}  // namespace

void validate(const RunConfig& c) {
  require(c.epochs >= 1, ErrorCode::invalid_argument, "epochs must be >= 1");
  require(!c.seeds.empty(), ErrorCode::invalid_argument, "at least one seed is required");
  require(c.hidden >= 1, ErrorCode::invalid_argument, "mlp hidden width must be >= 1");
  require(c.mlp_layers >= 1, ErrorCode::invalid_argument, "mlp layers must be >= 1");
  require(c.optimizer.lr > 0.0 && c.optimizer.weight_decay >= 0.0, ErrorCode::invalid_argument,
          "optimizer needs lr > 0 and weight_decay >= 0");
  FmpHyperParams(c.model.lambda_s, c.model.lambda_f, c.model.layers);
  validate(PropagationConfig{c.model.scheme, c.model.layers, c.model.alpha});
  require(c.dataset.synth.has_value() || (!c.dataset.nodes.empty() && !c.dataset.edges.empty()),
          ErrorCode::invalid_argument, "dataset needs either synth or nodes + edges");
  if (c.dataset.synth) validate(*c.dataset.synth);
}

RunConfig run_config_from_json(const json& doc, const std::filesystem::path& base) {
  RunConfig c;
  try {
    reject_unknown(doc, {"dataset", "model", "mlp", "optimizer", "epochs", "seeds", "split", "selection", "output"},
                   "config");
    if (doc.contains("dataset")) {
      const json& d = doc.at("dataset");
      reject_unknown(d, {"nodes", "edges", "schema", "schema_path", "name", "synth", "standardize",
                         "train_label_limit"},
                     "dataset");
      if (d.contains("synth")) c.dataset.synth = synth_config_from_json(d.at("synth"));
      if (d.contains("nodes")) c.dataset.nodes = resolve(base, d.at("nodes").get<std::string>());
      if (d.contains("edges")) c.dataset.edges = resolve(base, d.at("edges").get<std::string>());
      if (d.contains("schema")) c.dataset.schema = schema_from_json(d.at("schema"));
      if (d.contains("schema_path"))
        c.dataset.schema = schema_from_json(read_json_file(resolve(base, d.at("schema_path").get<std::string>())));
      c.dataset.name = d.value("name", std::string());
      c.dataset.standardize = d.value("standardize", true);
      if (d.contains("train_label_limit") && !d.at("train_label_limit").is_null())
        c.dataset.train_label_limit = d.at("train_label_limit").get<std::size_t>();
    }
    if (doc.contains("model")) {
      const json& m = doc.at("model");
      reject_unknown(m, {"scheme", "lambda_s", "lambda_f", "layers", "alpha"}, "model");
      if (m.contains("scheme")) c.model.scheme = parse_scheme(m.at("scheme").get<std::string>());
      c.model.lambda_s = m.value("lambda_s", c.model.lambda_s);
      c.model.lambda_f = m.value("lambda_f", c.model.lambda_f);
      c.model.layers = m.value("layers", c.model.layers);
      c.model.alpha = m.value("alpha", c.model.alpha);
    }
    if (doc.contains("mlp")) {
      const json& m = doc.at("mlp");
      reject_unknown(m, {"hidden", "layers"}, "mlp");
      c.hidden = m.value("hidden", c.hidden);
      c.mlp_layers = m.value("layers", c.mlp_layers);
    }
    if (doc.contains("optimizer")) {
      const json& o = doc.at("optimizer");
      reject_unknown(o, {"lr", "weight_decay", "beta1", "beta2", "eps"}, "optimizer");
      c.optimizer.lr = o.value("lr", c.optimizer.lr);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.eps = o.value("eps", c.optimizer.eps);
    }
    c.epochs = doc.value("epochs", c.epochs);
    if (doc.contains("seeds")) c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    if (doc.contains("split")) {
      const auto s = doc.at("split").get<std::vector<double>>();
      require(s.size() == 3, ErrorCode::parse, "split must list train, val and test fractions");
      c.split = {s[0], s[1], s[2]};
    }
    if (doc.contains("selection")) {
      const auto s = doc.at("selection").get<std::string>();
      require(s == "best_val" || s == "last", ErrorCode::parse, "selection must be best_val or last");
      c.selection = s == "best_val" ? Selection::best_val : Selection::last;
    }
    if (doc.contains("output")) {
      const json& o = doc.at("output");
      reject_unknown(o, {"dir", "results"}, "output");
      if (o.contains("dir")) c.output_dir = resolve(base, o.at("dir").get<std::string>());
      c.results = o.value("results", c.results);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed run config: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path), path.parent_path());
}

json to_json(const RunConfig& c) {
  json dataset = {{"name", c.dataset.name}, {"standardize", c.dataset.standardize}};
  if (c.dataset.synth) {
    dataset["synth"] = to_json(*c.dataset.synth);
  } else {
    dataset["nodes"] = c.dataset.nodes.string();
    dataset["edges"] = c.dataset.edges.string();
    dataset["schema"] = to_json(c.dataset.schema);
  }
  dataset["train_label_limit"] =
      c.dataset.train_label_limit ? json(*c.dataset.train_label_limit) : json(nullptr);
  return {{"dataset", std::move(dataset)},
          {"model",
           {{"scheme", scheme_name(c.model.scheme)},
            {"lambda_s", c.model.lambda_s},
            {"lambda_f", c.model.lambda_f},
            {"layers", c.model.layers},
            {"alpha", c.model.alpha}}},
          {"mlp", {{"hidden", c.hidden}, {"layers", c.mlp_layers}}},
          {"optimizer",
           {{"lr", c.optimizer.lr},
            {"weight_decay", c.optimizer.weight_decay},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps}}},
          {"epochs", c.epochs},
          {"seeds", c.seeds},
          {"split", {c.split.train, c.split.val, c.split.test}},
          {"selection", selection_name(c.selection)},
          {"output", {{"dir", c.output_dir.string()}, {"results", c.results}}}};
}

std::string config_fingerprint(const RunConfig& c) {
  json doc = to_json(c);
  doc.erase("seeds");
  doc.erase("output");
  doc["dataset"].erase("name");
  json& model = doc["model"];
  if (!uses_lambdas(c.model.scheme)) {
    model.erase("lambda_s");
    model.erase("lambda_f");
  }
  if (!uses_alpha(c.model.scheme)) model.erase("alpha");
  if (!uses_depth(c.model.scheme)) model.erase("layers");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

std::filesystem::path output_dir(const RunConfig& config) {
  if (const char* env = std::getenv("FMP_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

Dataset load_run_dataset(const DatasetSource& source) {
  Dataset d = source.synth ? synth_generate(*source.synth)
                         : load_dataset(source.nodes, source.edges, source.schema, source.name);
  if (!source.name.empty()) d.name = source.name;
  return d;
}

Matrix standardize(const Matrix& x, std::span<const std::size_t> nodes) {
  require(!nodes.empty(), ErrorCode::invalid_argument, "standardize: empty node set");
  const std::size_t d = x.cols();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t i : nodes)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
  for (double& m : mean) m /= static_cast<double>(nodes.size());
  for (std::size_t i : nodes)
    for (std::size_t j = 0; j < d; ++j) var[j] += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
  Matrix out(x.rows(), d);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(nodes.size()));
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, j) = (x(i, j) - mean[j]) * inv;
  }
  return out;
}

MaskChoice parse_mask(std::string_view name) {
  if (name == "train") return MaskChoice::train;
  if (name == "val") return MaskChoice::val;
  if (name == "test") return MaskChoice::test;
  fail(ErrorCode::invalid_argument, "unknown mask '" + std::string(name) + "'");
}

Model::Model(const RunConfig& config, const Dataset& dataset, const SplitMasks& masks)
    : params_(config.model),
      hidden_(config.hidden),
      mlp_layers_(config.mlp_layers),
      graph_(&dataset.graph),
      input_(config.dataset.standardize ? standardize(dataset.features, masks.train) : dataset.features),
      delta_(incident_vector(dataset.sensitive)) {
  if (params_.scheme == Scheme::sgc) input_ = sgc_propagate(*graph_, input_, params_.layers);
  if (params_.scheme == Scheme::ppnp) ppnp_ = ppnp_operator(*graph_, params_.alpha);
}

MlpConfig Model::mlp_config() const {
  MlpConfig c;
  c.input_dim = input_.cols();
  c.hidden.assign(static_cast<std::size_t>(mlp_layers_ - 1), hidden_);
  c.output_dim = 2;
  return c;
}

ad::Var Model::forward(ad::Tape& tape, const MlpBinding& params) const {
  const ad::Var x = tape.constant(input_);
  if (params_.scheme == Scheme::gcn) {
    const std::size_t layers = params.params.size() / 2;
    ad::Var h = x;
    for (std::size_t l = 0; l < layers; ++l) {
      h = ad::add_row(ad::spmm(*graph_, ad::matmul(h, params.params[2 * l])), params.params[2 * l + 1]);
      if (l + 1 < layers) h = ad::relu(h);
    }
    return h;
  }
  const ad::Var h = mlp_forward(params, x);
  switch (params_.scheme) {
    case Scheme::mlp:
    case Scheme::sgc:
    case Scheme::gcn:
      return h;
    case Scheme::appnp: {
      ad::Var f = h;
      for (int k = 0; k < params_.layers; ++k) f = ad::appnp_step(*graph_, f, h, params_.alpha);
      return f;
    }
    case Scheme::ppnp:
      return ad::matmul(tape.constant(ppnp_), h);
    case Scheme::fmp:
      return ad::fmp_propagate(h, *graph_, delta_, FmpHyperParams(params_.lambda_s, params_.lambda_f, params_.layers));
    case Scheme::ml1:
      return ad::ml1_propagate(h, *graph_, delta_, FmpHyperParams(params_.lambda_s, params_.lambda_f, params_.layers));
  }
  fail(ErrorCode::invalid_argument, "unhandled scheme");
}

Matrix Model::logits(const Mlp& mlp) const {
  ad::Tape tape;
  return forward(tape, bind(tape, mlp, false)).value();
}

namespace {

const std::vector<std::size_t>& mask_nodes(const SplitMasks& masks, MaskChoice choice) {
  switch (choice) {
    case MaskChoice::train: return masks.train;
    case MaskChoice::val: return masks.val;
    case MaskChoice::test: return masks.test;
  }
  return masks.test;
}

void fill_identity(MetricsReport& r, const RunConfig& config, std::uint64_t seed) {
  r.seed = seed;
  r.scheme = scheme_name(config.model.scheme);
  r.lambda_s = config.model.lambda_s;
  r.lambda_f = config.model.lambda_f;
  r.config_fingerprint = config_fingerprint(config);
}

MetricsReport evaluate_model(const RunConfig& config, const Model& model, const Mlp& mlp,
                             const Dataset& dataset, const SplitMasks& masks, MaskChoice mask) {
  validate(mlp);
  const MlpConfig expected = model.mlp_config();
  require(mlp.config.input_dim == expected.input_dim && mlp.config.hidden == expected.hidden &&
              mlp.config.output_dim == expected.output_dim,
          ErrorCode::dimension_mismatch,
          "checkpoint input_dim " + std::to_string(mlp.config.input_dim) + " with " +
              std::to_string(mlp.config.hidden.size()) + " hidden layers does not match the dataset/config (" +
              std::to_string(expected.input_dim) + ", " + std::to_string(expected.hidden.size()) + ")");
  const Matrix logits = model.logits(mlp);
  MetricsReport r = compute_metrics(logits, dataset.labels, dataset.sensitive, mask_nodes(masks, mask));
  fill_identity(r, config, masks.seed);
  if (!masks.val.empty()) {
    const std::vector<int> y_hat = predict_labels(logits);
    r.val_accuracy = accuracy(y_hat, dataset.labels, masks.val);
    r.val_dp = nan_if_empty_group([&] { return demographic_parity(y_hat, dataset.sensitive, masks.val); });
  } else {
    r.val_accuracy = kNaN;
    r.val_dp = kNaN;
  }
  return r;
}

}  // namespace

MetricsReport evaluate(const RunConfig& config, const Mlp& mlp, const Dataset& dataset,
                       const SplitMasks& masks, MaskChoice mask) {
  const Model model(config, dataset, masks);
  return evaluate_model(config, model, mlp, dataset, masks, mask);
}

TrainResult train_run(const RunConfig& config, const Dataset& dataset, std::uint64_t seed) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  const SplitMasks masks = make_splits(dataset, config.split, seed, config.dataset.train_label_limit);
  require(!masks.train.empty(), ErrorCode::invalid_argument, "training split is empty");
  require(config.selection == Selection::last || !masks.val.empty(), ErrorCode::invalid_argument,
          "best_val selection needs a nonempty validation split");
  const Model model(config, dataset, masks);

  Mlp mlp = init_weights(model.mlp_config(), seed);
  const std::vector<Matrix*> params = mlp.parameters();
  const std::vector<const Matrix*> const_params(params.begin(), params.end());
  AdamState adam = make_adam(config.optimizer, const_params);

  TrainResult result;
  result.checkpoint = mlp;
  double best_val = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    ad::Tape tape;
    const MlpBinding binding = bind(tape, mlp);
    const ad::Var logits = model.forward(tape, binding);
    const ad::Var loss = ad::cross_entropy_with_logits(logits, dataset.labels, masks.train);
    const double loss_value = loss.value()(0, 0);
    require(std::isfinite(loss_value), ErrorCode::numeric,
            "training diverged: non-finite loss at epoch " + std::to_string(epoch) + " (seed " +
                std::to_string(seed) + ")");
    tape.backward(loss);

    const std::vector<int> y_hat = predict_labels(logits.value());
    const double val_acc = masks.val.empty() ? kNaN : accuracy(y_hat, dataset.labels, masks.val);
    const double val_dp =
        masks.val.empty() ? kNaN
                          : nan_if_empty_group([&] { return demographic_parity(y_hat, dataset.sensitive, masks.val); });
    result.trace.train_loss.push_back(loss_value);
    result.trace.val_accuracy.push_back(val_acc);
    result.trace.val_dp.push_back(val_dp);
    if (config.selection == Selection::best_val && val_acc > best_val) {
      best_val = val_acc;
      result.checkpoint = mlp;
      result.trace.best_epoch = static_cast<std::size_t>(epoch);
    }

    std::vector<const Matrix*> grads;
    grads.reserve(binding.params.size());
    for (const ad::Var& p : binding.params) grads.push_back(&p.grad());
    adam_step(params, grads, adam);
  }
  if (config.selection == Selection::last) {
    result.checkpoint = mlp;
    result.trace.best_epoch = static_cast<std::size_t>(config.epochs - 1);
  }

  result.report = evaluate_model(config, model, result.checkpoint, dataset, masks, MaskChoice::test);
  result.report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

SweepGrid sweep_grid_from_json(const json& doc) {
  SweepGrid g;
  try {
    reject_unknown(doc, {"lambda_s", "lambda_f", "selection_tolerance", "jobs"}, "grid");
    if (doc.contains("lambda_s")) g.lambda_s = doc.at("lambda_s").get<std::vector<double>>();
    if (doc.contains("lambda_f")) g.lambda_f = doc.at("lambda_f").get<std::vector<double>>();
    g.selection_tolerance = doc.value("selection_tolerance", g.selection_tolerance);
    g.jobs = doc.value("jobs", g.jobs);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed grid: ") + e.what());
  }
  require(!g.lambda_s.empty() && !g.lambda_f.empty(), ErrorCode::invalid_argument, "grid must be nonempty");
  require(g.jobs >= 1, ErrorCode::invalid_argument, "jobs must be >= 1");
  return g;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  std::vector<double> finite;
  for (double v : values)
    if (std::isfinite(v)) finite.push_back(v);
  if (finite.empty()) return {kNaN, kNaN};
  const double mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
  if (finite.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : finite) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(finite.size() - 1))};
}

std::vector<SweepPoint> summarize(std::span<const MetricsReport> rows, double selection_tolerance) {
  std::map<std::string, std::vector<const MetricsReport*>> groups;
  std::vector<std::string> order;
  for (const MetricsReport& r : rows) {
    if (r.status != "ok") continue;
    auto [it, fresh] = groups.try_emplace(r.config_fingerprint);
    if (fresh) order.push_back(r.config_fingerprint);
    it->second.push_back(&r);
  }
  std::vector<SweepPoint> points;
  for (const std::string& fp : order) {
    const auto& members = groups[fp];
    SweepPoint p;
    p.scheme = members.front()->scheme;
    p.lambda_s = members.front()->lambda_s;
    p.lambda_f = members.front()->lambda_f;
    p.fingerprint = fp;
    p.runs = members.size();
    std::vector<double> acc, dp, eo, vacc, vdp;
    for (const MetricsReport* r : members) {
      acc.push_back(r->accuracy);
      dp.push_back(r->dp);
      eo.push_back(r->eo);
      vacc.push_back(r->val_accuracy);
      vdp.push_back(r->val_dp);
    }
    std::tie(p.acc_mean, p.acc_std) = mean_std(acc);
    std::tie(p.dp_mean, p.dp_std) = mean_std(dp);
    std::tie(p.eo_mean, p.eo_std) = mean_std(eo);
    p.val_acc_mean = mean_std(vacc).first;
    p.val_dp_mean = mean_std(vdp).first;
    points.push_back(std::move(p));
  }

  for (SweepPoint& p : points) {
    p.pareto = std::isfinite(p.acc_mean) && std::isfinite(p.dp_mean);
    for (const SweepPoint& q : points) {
      if (&q == &p || !p.pareto || !std::isfinite(q.acc_mean) || !std::isfinite(q.dp_mean)) continue;
      const bool dominates = q.acc_mean >= p.acc_mean && q.dp_mean <= p.dp_mean &&
                             (q.acc_mean > p.acc_mean || q.dp_mean < p.dp_mean);
      if (dominates) p.pareto = false;
    }
  }

  double best_val = -std::numeric_limits<double>::infinity();
  for (const SweepPoint& p : points)
    if (std::isfinite(p.val_acc_mean)) best_val = std::max(best_val, p.val_acc_mean);
  SweepPoint* chosen = nullptr;
  for (SweepPoint& p : points) {
    if (!std::isfinite(p.val_acc_mean) || p.val_acc_mean < best_val - selection_tolerance) continue;
    const double dp = std::isfinite(p.val_dp_mean) ? p.val_dp_mean : std::numeric_limits<double>::infinity();
    const double chosen_dp = chosen == nullptr || !std::isfinite(chosen->val_dp_mean)
                                 ? std::numeric_limits<double>::infinity()
                                 : chosen->val_dp_mean;
    if (chosen == nullptr || dp < chosen_dp) chosen = &p;
  }
  if (chosen != nullptr) chosen->selected = true;
  return points;
}

void write_summary(const std::filesystem::path& path, std::span<const SweepPoint> points) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write summary " + path.string());
  out << "scheme,lambda_s,lambda_f,runs,acc_mean,acc_std,dp_mean,dp_std,eo_mean,eo_std,val_acc_mean,"
         "val_dp_mean,pareto,selected,fingerprint\n";
  const auto f = csv::format_double;
  for (const SweepPoint& p : points) {
    out << p.scheme << ',' << f(p.lambda_s) << ',' << f(p.lambda_f) << ',' << p.runs << ','
        << f(p.acc_mean) << ',' << f(p.acc_std) << ',' << f(p.dp_mean) << ',' << f(p.dp_std) << ','
        << f(p.eo_mean) << ',' << f(p.eo_std) << ',' << f(p.val_acc_mean) << ',' << f(p.val_dp_mean) << ','
        << (p.pareto ? 1 : 0) << ',' << (p.selected ? 1 : 0) << ',' << p.fingerprint << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::io, "failed writing summary " + path.string());
}

SweepSummary sweep(const RunConfig& config, const SweepGrid& grid, const Dataset& dataset) {
  validate(config);
  SweepSummary summary;
  const std::filesystem::path dir = output_dir(config);
  std::filesystem::create_directories(dir);
  summary.results = dir / config.results;
  summary.summary = summary.results.parent_path() / (summary.results.stem().string() + "_summary.csv");

  std::set<std::pair<std::string, std::uint64_t>> done;
  if (std::filesystem::exists(summary.results) && std::filesystem::file_size(summary.results) > 0)
    for (const MetricsReport& r : read_results(summary.results)) done.emplace(r.config_fingerprint, r.seed);

  struct Task {
    RunConfig config;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  std::set<std::string> fingerprints;
  for (double ls : grid.lambda_s) {
    for (double lf : grid.lambda_f) {
      RunConfig point = config;
      point.model.lambda_s = ls;
      point.model.lambda_f = lf;
      validate(point);
      const std::string fp = config_fingerprint(point);
      if (!fingerprints.insert(fp).second) continue;
      for (std::uint64_t seed : config.seeds) {
        if (done.count({fp, seed}) != 0) {
          ++summary.skipped;
          continue;
        }
        tasks.push_back({point, seed});
      }
    }
  }

  std::mutex writer;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed{0};
  const auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const Task& task = tasks[t];
      MetricsReport report;
      try {
        report = train_run(task.config, dataset, task.seed).report;
      } catch (const Error& e) {
        report = MetricsReport{};
        fill_identity(report, task.config, task.seed);
        report.accuracy = report.dp = report.eo = report.fairness_obj = kNaN;
        report.val_accuracy = report.val_dp = kNaN;
        report.status = std::string("failed:") + std::string(to_string(e.code()));
        ++failed;
        const std::lock_guard lock(writer);
        std::cerr << "run failed (lambda_s=" << task.config.model.lambda_s
                  << ", lambda_f=" << task.config.model.lambda_f << ", seed=" << task.seed
                  << "): " << e.what() << '\n';
      }
      const std::lock_guard lock(writer);
      write_results(summary.results, std::span<const MetricsReport>(&report, 1), true);
    }
  };
  const std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(grid.jobs), std::max<std::size_t>(tasks.size(), 1));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  summary.executed = tasks.size();
  summary.failed = failed;

  std::vector<MetricsReport> rows;
  if (std::filesystem::exists(summary.results))
    for (MetricsReport& r : read_results(summary.results))
      if (fingerprints.count(r.config_fingerprint) != 0) rows.push_back(std::move(r));
  summary.points = summarize(rows, grid.selection_tolerance);
  write_summary(summary.summary, summary.points);
  return summary;
}

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::filesystem::path& file) const {
    const auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), ErrorCode::parse, file.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  Table t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::parse, path.string() + ": empty file");
  for (auto& c : csv::split_line(line)) t.header.push_back(csv::trim(c));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    auto cells = csv::split_line(line);
    require(cells.size() == t.header.size(), ErrorCode::parse,
            path.filename().string() + ":" + std::to_string(line_no) + ": wrong cell count");
    for (auto& c : cells) c = csv::trim(c);
    t.rows.push_back(std::move(cells));
  }
  return t;
}

int parse_int_cell(const std::string& cell, const std::string& where) {
  double v = 0.0;
  require(csv::parse_double(cell, v) && v == std::floor(v), ErrorCode::parse,
          where + ": '" + cell + "' is not an integer");
  return static_cast<int>(v);
}

}  // namespace

MetricsReport metrics_from_files(const std::filesystem::path& pred, const std::filesystem::path& truth) {
  const Table p = read_table(pred);
  const Table t = read_table(truth);
  const std::size_t p_id = p.column("id", pred), p_pred = p.column("pred", pred);
  const std::size_t t_id = t.column("id", truth), t_label = t.column("label", truth),
                    t_sens = t.column("sensitive", truth);
  std::map<std::string, int> predictions;
  for (const auto& row : p.rows)
    require(predictions.emplace(row[p_id], parse_int_cell(row[p_pred], pred.string())).second,
            ErrorCode::parse, pred.string() + ": duplicate id '" + row[p_id] + "'");

  std::vector<int> y_hat, labels, sensitive;
  std::vector<std::size_t> nodes;
  for (const auto& row : t.rows) {
    const auto it = predictions.find(row[t_id]);
    require(it != predictions.end(), ErrorCode::parse, "no prediction for id '" + row[t_id] + "'");
    y_hat.push_back(it->second);
    labels.push_back(row[t_label].empty() ? kMissingLabel : parse_int_cell(row[t_label], truth.string()));
    sensitive.push_back(row[t_sens] == "1" || row[t_sens] == "+1" ? 1 : -1);
    if (labels.back() != kMissingLabel) nodes.push_back(labels.size() - 1);
  }
  MetricsReport r;
  r.scheme = "file";
  r.n_eval = nodes.size();
  r.accuracy = accuracy(y_hat, labels, nodes);
  r.dp = nan_if_empty_group([&] { return demographic_parity(y_hat, sensitive, nodes); });
  r.eo = nan_if_empty_group([&] { return equal_opportunity(y_hat, labels, sensitive, nodes); });
  r.fairness_obj = kNaN;
  r.val_accuracy = r.val_dp = kNaN;
  return r;
}

}  // namespace fmp
