// mtmkl: train, grid-search, predict, task affinity and the complexity bound.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtmkl/experiment.hpp"

namespace {

using nlohmann::json;

int report_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return 1;
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> mode;
  std::optional<double> lambda;
  std::optional<double> C;
  std::optional<double> rho;
  std::optional<std::size_t> threads;

  void Attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "run configuration (JSON)")->required();
    cmd->add_option("--seed", seed, "split and training seed");
    cmd->add_option("--output", output, "output directory");
    cmd->add_option("--mode", mode, "ours | stl | mtl")
        ->check(CLI::IsMember({"ours", "stl", "mtl"}));
    cmd->add_option("--lambda", lambda, "fusion weight");
    cmd->add_option("--c", C, "SVM cost");
    cmd->add_option("--rho", rho, "ADMM penalty");
    cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }

  mtmkl::RunConfig Load() const {
    mtmkl::RunConfig c = mtmkl::load_run_config(config);
    if (seed) c.train.seed = *seed;
    if (output) c.output_dir = *output;
    if (mode) c.mode = mtmkl::parse_mode(*mode);
    if (lambda) c.train.lambda = *lambda;
    if (C) c.train.C = *C;
    if (rho) c.train.rho = *rho;
    if (threads) c.train.threads = *threads;
    c.Validate();
    return c;
  }
};

void summarize(const json& report) {
  json brief = {{"command", report.value("command", "")}};
  for (const char* key : {"mode", "selected", "mean_test_accuracy", "objective", "converged", "task",
                          "accuracy", "bound"}) {
    if (report.contains(key)) brief[key] = report[key];
  }
  if (report.contains("affinity")) brief["groups"] = report["affinity"]["groups"];
  std::cout << brief.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task multiple kernel learning"};
  app.require_subcommand(1);

  Overrides train_opts;
  auto* train = app.add_subcommand("train", "train once and evaluate on the test split");
  train_opts.Attach(train);

  Overrides grid_opts;
  auto* grid = app.add_subcommand("grid", "select (C, lambda) on the validation split");
  grid_opts.Attach(grid);

  std::string model_path, data_path, task, format = "sparse", output = "out";
  auto* predict = app.add_subcommand("predict", "score a labelled file with one task");
  predict->add_option("--model", model_path, "model.json")->required();
  predict->add_option("--data", data_path, "samples")->required();
  predict->add_option("--task", task, "task name or index")->required();
  predict->add_option("--format", format, "sparse | csv")->check(CLI::IsMember({"sparse", "csv"}));
  predict->add_option("--output", output, "output directory");

  double eps = 1e-3;
  std::string affinity_output = "out";
  auto* affinity = app.add_subcommand("affinity", "pairwise theta distances and groups");
  affinity->add_option("--model", model_path, "model.json")->required();
  affinity->add_option("--eps", eps, "grouping threshold");
  affinity->add_option("--output", affinity_output, "output directory");

  double gamma = 0, R = 0, M = 0, n = 0, T = 0;
  std::string bound_output;
  auto* bound = app.add_subcommand("bound", "complexity bound sqrt(sqrt(3) gamma R M / (n T))");
  bound->add_option("--gamma", gamma)->required();
  bound->add_option("--R", R)->required();
  bound->add_option("--M", M)->required();
  bound->add_option("--n", n)->required();
  bound->add_option("--T", T)->required();
  bound->add_option("--output", bound_output, "write report.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("usage_error", e.what()) + 1;
  }

  try {
    json report;
    if (train->parsed()) {
      report = mtmkl::run_train(train_opts.Load()).report;
    } else if (grid->parsed()) {
      report = mtmkl::run_grid(grid_opts.Load()).report;
    } else if (predict->parsed()) {
      report = mtmkl::run_predict(
          model_path, data_path,
          format == "csv" ? mtmkl::DataFormat::kDenseCsv : mtmkl::DataFormat::kSparse, task,
          output);
    } else if (affinity->parsed()) {
      report = mtmkl::run_affinity(model_path, eps, affinity_output);
    } else if (bound->parsed()) {
      report = mtmkl::run_bound(gamma, R, M, n, T, bound_output);
      std::cout << mtmkl::format_number(report["bound"]["value"].get<double>()) << '\n';
      return 0;
    }
    summarize(report);
    return 0;
  } catch (const mtmkl::Error& e) {
    return report_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report_error("internal_error", e.what());
  }
}
