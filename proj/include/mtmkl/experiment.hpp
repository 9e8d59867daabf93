#ifndef MTMKL_EXPERIMENT_HPP_
#define MTMKL_EXPERIMENT_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtmkl/dataset.hpp"
#include "mtmkl/kernel_bank.hpp"
#include "mtmkl/trainer.hpp"

namespace mtmkl {

inline constexpr const char* kReportFormat = "mtmkl-report";
inline constexpr int kReportVersion = 1;

enum class Mode { kOurs, kStl, kMtl };

std::string mode_name(Mode mode);
//! Throws InputError for anything but "ours", "stl", "mtl".
Mode parse_mode(const std::string& name);

struct Grid {
  std::vector<double> C;
  std::vector<double> lambda;

  //! {2^-10, ..., 2^10} for both axes.
  static Grid Default();
};

struct RunConfig {
  std::filesystem::path manifest;
  DataFormat data_format = DataFormat::kSparse;
  std::vector<KernelSpec> kernels;
  TrainConfig train;
  Grid grid = Grid::Default();
  Mode mode = Mode::kOurs;
  double lambda_big = 1e6;
  SplitOptions split;
  bool min_max_scale = false;
  std::filesystem::path output_dir = "out";
  bool emit_trace = true;
  bool emit_affinity = true;
  bool emit_bound = false;
  double affinity_eps = 1e-3;
  //! Unset gamma falls back to the trained fusion penalty.
  std::optional<double> bound_gamma;
  double bound_R = 1.0;

  //! Throws InputError on empty kernels, non-positive grid values or eps.
  void Validate() const;
  //! lambda after the mode override.
  double effective_lambda(double requested) const;
};

//! Reads a JSON run configuration; relative paths resolve against its directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = {});
nlohmann::json run_config_to_json(const RunConfig& config);

//! Loads the manifest, splits each task (seed derived per task), optionally
//! scales, and validates.
std::vector<TaskDataset> prepare_tasks(const RunConfig& config);

//! Fraction of correct signs over the given rows of each task; NaN for an
//! empty row set.
std::vector<double> task_accuracies(const TrainedModel& model,
                                    const std::vector<TaskDataset>& tasks,
                                    IndexList Split::*rows);
//! Mean over tasks with a defined accuracy; NaN when none.
double mean_accuracy(const std::vector<double>& accuracies);

struct Affinity {
  Matrix distances;
  std::vector<int> group;  //!< group id per task, numbered by first member
  int num_groups = 0;
};

//! D[t][s] = |theta_t - theta_s|_2; t and s share a group when linked by a
//! chain of pairs with D < eps.
Affinity task_affinity(const ThetaMatrix& theta, double eps = 1e-3);
void write_affinity_csv(const std::filesystem::path& path, const Affinity& affinity,
                        const std::vector<std::string>& names);
void write_groups_csv(const std::filesystem::path& path, const Affinity& affinity,
                      const std::vector<std::string>& names);
void write_trace_csv(const std::filesystem::path& path, const TrainedModel& model);

struct GridPoint {
  double C = 0.0;
  double lambda = 0.0;
  double validation_accuracy = 0.0;
  std::optional<std::string> error;
};

//! Highest mean validation accuracy; ties go to smaller lambda, then smaller C.
//! Throws GridError when no point succeeded.
const GridPoint& select_grid_point(const std::vector<GridPoint>& points);

struct RunResult {
  nlohmann::json report;
  TrainedModel model;
};

//! Trains once with the configured (C, lambda); writes report.json, model.json
//! and the enabled CSVs into output_dir.
RunResult run_train(const RunConfig& config);
//! Trains every grid point, picks by validation accuracy, retrains the winner
//! on the train split and reports test accuracy.
RunResult run_grid(const RunConfig& config);

//! Scores one task of a saved model on a labelled file; writes
//! predictions.csv (row, decision value, predicted label, label) and report.json.
nlohmann::json run_predict(const std::filesystem::path& model_path,
                           const std::filesystem::path& data_path, DataFormat format,
                           const std::string& task, const std::filesystem::path& output_dir);
//! Writes affinity.csv, groups.csv and report.json for a saved model.
nlohmann::json run_affinity(const std::filesystem::path& model_path, double eps,
                            const std::filesystem::path& output_dir);
//! Evaluates bound_value; writes report.json when output_dir is non-empty.
nlohmann::json run_bound(double gamma, double R, double M, double n, double T,
                         const std::filesystem::path& output_dir);

//! Drops timing fields so two reports can be compared.
nlohmann::json without_timing(nlohmann::json report);

//! Throws InputError listing every schema violation.
void validate_report(const nlohmann::json& report);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

//! Writes "%.17g".
std::string format_number(double value);

}  // namespace mtmkl

#endif  // MTMKL_EXPERIMENT_HPP_
