#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fmp/data.hpp"
#include "fmp/error.hpp"
#include "fmp/nn.hpp"
#include "fmp/runner.hpp"
#include "json.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json report_json(const fmp::MetricsReport& r) {
  return {{"seed", r.seed},
          {"scheme", r.scheme},
          {"lambda_s", r.lambda_s},
          {"lambda_f", r.lambda_f},
          {"acc", number(r.accuracy)},
          {"dp", number(r.dp)},
          {"eo", number(r.eo)},
          {"fairness_obj", number(r.fairness_obj)},
          {"n_eval", r.n_eval},
          {"val_acc", number(r.val_accuracy)},
          {"val_dp", number(r.val_dp)},
          {"wall_time_ms", r.wall_time_ms},
          {"fingerprint", r.config_fingerprint},
          {"status", r.status}};
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  fmp::require(static_cast<bool>(in), fmp::ErrorCode::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fmp::fail(fmp::ErrorCode::parse, path.string() + ": " + e.what());
  }
}

void write_trace(const fs::path& path, const fmp::TrainTrace& trace) {
  std::ofstream out(path);
  fmp::require(static_cast<bool>(out), fmp::ErrorCode::io, "cannot write " + path.string());
  out << "epoch,train_loss,val_acc,val_dp,best\n";
  for (std::size_t e = 0; e < trace.train_loss.size(); ++e)
    out << e << ',' << trace.train_loss[e] << ',' << trace.val_accuracy[e] << ',' << trace.val_dp[e] << ','
        << (e == trace.best_epoch ? 1 : 0) << '\n';
}

int cmd_train(const fs::path& config_path) {
  const fmp::RunConfig config = fmp::load_run_config(config_path);
  const fmp::Dataset dataset = fmp::load_run_dataset(config.dataset);
  const fs::path dir = fmp::output_dir(config);
  fs::create_directories(dir);
  const json run = fmp::to_json(config);

  std::vector<fmp::MetricsReport> reports;
  json runs = json::array();
  for (std::uint64_t seed : config.seeds) {
    const fmp::TrainResult result = fmp::train_run(config, dataset, seed);
    const std::string tag = "seed" + std::to_string(seed);
    fmp::save_checkpoint(dir / ("checkpoint_" + tag + ".json"), result.checkpoint,
                         {{"run", run}, {"fingerprint", result.report.config_fingerprint}});
    write_trace(dir / ("trace_" + tag + ".csv"), result.trace);
    fmp::write_results(dir / config.results, std::span<const fmp::MetricsReport>(&result.report, 1), true);
    json r = report_json(result.report);
    r["best_epoch"] = result.trace.best_epoch;
    runs.push_back(std::move(r));
    reports.push_back(result.report);
  }
  std::vector<double> acc, dp, eo;
  for (const auto& r : reports) {
    acc.push_back(r.accuracy);
    dp.push_back(r.dp);
    eo.push_back(r.eo);
  }
  const auto [acc_m, acc_s] = fmp::mean_std(acc);
  const auto [dp_m, dp_s] = fmp::mean_std(dp);
  const auto [eo_m, eo_s] = fmp::mean_std(eo);
  std::cout << json{{"runs", runs},
                    {"acc_mean", number(acc_m)},
                    {"acc_std", number(acc_s)},
                    {"dp_mean", number(dp_m)},
                    {"dp_std", number(dp_s)},
                    {"eo_mean", number(eo_m)},
                    {"eo_std", number(eo_s)},
                    {"output_dir", dir.string()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_sweep(const fs::path& config_path, const fs::path& grid_path, int jobs) {
  const fmp::RunConfig config = fmp::load_run_config(config_path);
  fmp::SweepGrid grid = fmp::sweep_grid_from_json(read_json(grid_path));
  if (jobs > 0) grid.jobs = jobs;
  const fmp::Dataset dataset = fmp::load_run_dataset(config.dataset);
  const fmp::SweepSummary s = fmp::sweep(config, grid, dataset);
  json points = json::array();
  for (const auto& p : s.points)
    points.push_back({{"lambda_s", p.lambda_s},
                      {"lambda_f", p.lambda_f},
                      {"runs", p.runs},
                      {"acc_mean", number(p.acc_mean)},
                      {"dp_mean", number(p.dp_mean)},
                      {"pareto", p.pareto},
                      {"selected", p.selected}});
  std::cout << json{{"results", s.results.string()},
                    {"summary", s.summary.string()},
                    {"executed", s.executed},
                    {"skipped", s.skipped},
                    {"failed", s.failed},
                    {"points", points}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& config_path, const std::string& mask) {
  const fmp::RunConfig config = fmp::load_run_config(config_path);
  const fmp::Dataset dataset = fmp::load_run_dataset(config.dataset);
  const fmp::Mlp mlp = fmp::mlp_from_checkpoint(fmp::load_checkpoint_json(checkpoint));
  const fmp::SplitMasks masks =
      fmp::make_splits(dataset, config.split, mlp.seed, config.dataset.train_label_limit);
  const fmp::MetricsReport r = fmp::evaluate(config, mlp, dataset, masks, fmp::parse_mask(mask));
  json out = report_json(r);
  out["mask"] = mask;
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_synth(const fs::path& config_path, const fs::path& out_dir) {
  json doc = read_json(config_path);
  if (doc.contains("synth")) doc = doc.at("synth");
  const fmp::Dataset d = fmp::synth_generate(fmp::synth_config_from_json(doc));
  fmp::save_dataset(d, out_dir);
  std::vector<int> labels = d.labels;
  std::cout << json{{"out", out_dir.string()},
                    {"n", d.num_nodes()},
                    {"m", d.graph.num_edges()},
                    {"sens_homophily", fmp::edge_homophily(d.graph, d.sensitive)},
                    {"label_homophily", fmp::edge_homophily(d.graph, labels)}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_metrics(const fs::path& pred, const fs::path& truth) {
  const fmp::MetricsReport r = fmp::metrics_from_files(pred, truth);
  std::cout << json{{"acc", number(r.accuracy)}, {"dp", number(r.dp)}, {"eo", number(r.eo)}, {"n_eval", r.n_eval}}
                   .dump()
            << '\n';
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair message passing for graph neural networks"};
  app.require_subcommand(1);

  std::string config, grid, checkpoint, out, pred, truth, mask = "test";
  int jobs = 0;

  auto* train = app.add_subcommand("train", "Train one model per seed");
  train->add_option("--config", config, "Run config JSON")->required();

  auto* sweep = app.add_subcommand("sweep", "Grid over lambda_s x lambda_f");
  sweep->add_option("--config", config, "Run config JSON")->required();
  sweep->add_option("--grid", grid, "Grid JSON")->required();
  sweep->add_option("--jobs", jobs, "Concurrent runs (overrides the grid file)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  eval->add_option("--config", config, "Run config JSON")->required();
  eval->add_option("--mask", mask, "train, val or test");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", config, "Synth config JSON")->required();
  synth->add_option("--out", out, "Output directory")->required();

  auto* metrics = app.add_subcommand("metrics", "Fairness metrics of a prediction file");
  metrics->add_option("--pred", pred, "CSV with id,pred")->required();
  metrics->add_option("--truth", truth, "CSV with id,label,sensitive")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*train) return cmd_train(config);
    if (*sweep) return cmd_sweep(config, grid, jobs);
    if (*eval) return cmd_eval(checkpoint, config, mask);
    if (*synth) return cmd_synth(config, out);
    if (*metrics) return cmd_metrics(pred, truth);
  } catch (const fmp::Error& e) {
    std::cerr << "error: " << fmp::to_string(e.code()) << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}
