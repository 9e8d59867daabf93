#include "mtmkl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "mtmkl/model_io.hpp"

namespace mtmkl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string projection_name(ProjectionMode p) {
  return p == ProjectionMode::kExact ? "exact" : "dykstra";
}

std::string divisor_name(ThetaDivisor d) {
  return d == ThetaDivisor::kDerived ? "derived" : "printed";
}

std::string format_name(DataFormat f) { return f == DataFormat::kSparse ? "sparse" : "csv"; }

DataFormat parse_format(const std::string& s) {
  if (s == "sparse") return DataFormat::kSparse;
  if (s == "csv") return DataFormat::kDenseCsv;
  throw InputError("config: data_format must be 'sparse' or 'csv', got '" + s + "'");
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw InputError("config: '" + where + "' must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw InputError("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return (p.is_relative() && !base.empty()) ? base / p : p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

json affinity_json(const Affinity& a, double eps) {
  double max_off = 0.0;
  const Index T = a.distances.rows();
  for (Index t = 0; t < T; ++t) {
    for (Index s = t + 1; s < T; ++s) max_off = std::max(max_off, a.distances(t, s));
  }
  return {{"eps", eps}, {"num_groups", a.num_groups}, {"groups", a.group},
          {"max_distance", max_off}};
}

std::vector<std::string> task_names(const TrainedModel& model) {
  std::vector<std::string> names;
  for (const auto& t : model.tasks) names.push_back(t.name);
  return names;
}

json header(const std::string& command) {
  return {{"format", kReportFormat}, {"version", kReportVersion}, {"command", command}};
}

// Report body shared by train and grid.
json model_report(const RunConfig& config, const std::string& command, const TrainedModel& model,
                  const std::vector<TaskDataset>& tasks) {
  json report = header(command);
  report["mode"] = mode_name(config.mode);
  report["seed"] = config.train.seed;
  report["selected"] = {{"C", model.C}, {"lambda", model.lambda}};

  const auto test = task_accuracies(model, tasks, &Split::test);
  const auto validation = task_accuracies(model, tasks, &Split::validation);
  json per_task = json::array();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Vector& theta = model.tasks[t].theta;
    per_task.push_back({{"name", tasks[t].name},
                        {"n_train", tasks[t].split.train.size()},
                        {"n_validation", tasks[t].split.validation.size()},
                        {"n_test", tasks[t].split.test.size()},
                        {"test_accuracy", number_or_null(test[t])},
                        {"validation_accuracy", number_or_null(validation[t])},
                        {"theta", std::vector<double>(theta.data(), theta.data() + theta.size())}});
  }
  report["tasks"] = per_task;
  report["mean_test_accuracy"] = number_or_null(mean_accuracy(test));
  report["mean_validation_accuracy"] = number_or_null(mean_accuracy(validation));
  report["objective"] = model.objective;
  report["outer_iterations"] = model.outer_iterations;
  report["admm_iterations"] = model.admm_iterations;
  report["converged"] = model.converged;
  report["warnings"] = model.warnings;

  json files = {{"model", "model.json"}};
  if (config.emit_trace) files["trace"] = "trace.csv";
  if (config.emit_affinity) {
    files["affinity"] = "affinity.csv";
    files["groups"] = "groups.csv";
    report["affinity"] = affinity_json(task_affinity(model.theta(), config.affinity_eps),
                                       config.affinity_eps);
  }
  report["files"] = files;

  if (config.emit_bound) {
    const ThetaMatrix theta = model.theta();
    const double gamma = config.bound_gamma ? *config.bound_gamma : fusion_penalty(theta);
    double n = 0.0;
    for (const auto& ds : tasks) n += static_cast<double>(ds.split.train.size());
    n /= static_cast<double>(tasks.size());
    const double M = static_cast<double>(model.kernels.size());
    const double T = static_cast<double>(tasks.size());
    json bound = {{"gamma", gamma}, {"gamma_source", config.bound_gamma ? "config" : "fusion_penalty"},
                  {"R", config.bound_R}, {"M", M}, {"n", n}, {"T", T}};
    // A fully fused model has gamma = 0, outside the bound's domain.
    bound["value"] = gamma > 0.0 ? json(bound_value(gamma, config.bound_R, M, n, T)) : json(nullptr);
    report["bound"] = bound;
  }
  report["config"] = run_config_to_json(config);
  return report;
}

void emit_outputs(const RunConfig& config, const TrainedModel& model, const json& report) {
  fs::create_directories(config.output_dir);
  save_model(model, config.output_dir / "model.json");
  if (config.emit_trace) write_trace_csv(config.output_dir / "trace.csv", model);
  if (config.emit_affinity) {
    const Affinity a = task_affinity(model.theta(), config.affinity_eps);
    write_affinity_csv(config.output_dir / "affinity.csv", a, task_names(model));
    write_groups_csv(config.output_dir / "groups.csv", a, task_names(model));
  }
  validate_report(report);
  write_json(config.output_dir / "report.json", report);
}

}  // namespace

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kOurs: return "ours";
    case Mode::kStl: return "stl";
    case Mode::kMtl: return "mtl";
  }
  return "ours";
}

Mode parse_mode(const std::string& name) {
  if (name == "ours") return Mode::kOurs;
  if (name == "stl") return Mode::kStl;
  if (name == "mtl") return Mode::kMtl;
  throw InputError("mode must be one of ours, stl, mtl; got '" + name + "'");
}

Grid Grid::Default() {
  Grid g;
  for (int e = -10; e <= 10; ++e) {
    g.C.push_back(std::ldexp(1.0, e));
    g.lambda.push_back(std::ldexp(1.0, e));
  }
  return g;
}

void RunConfig::Validate() const {
  if (kernels.empty()) throw InputError("config: kernel menu is empty");
  for (const auto& k : kernels) k.Validate();
  train.Validate();
  if (grid.C.empty() || grid.lambda.empty()) throw InputError("config: grid axes must be non-empty");
  for (double v : grid.C) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("config: grid C values must be positive");
  }
  for (double v : grid.lambda) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("config: grid lambda values must be positive");
  }
  if (!(lambda_big > 0.0)) throw InputError("config: lambda_big must be positive");
  if (!(split.train_frac > 0.0 && split.train_frac < 1.0)) {
    throw InputError("config: split.train_frac must lie in (0, 1)");
  }
  if (!(affinity_eps > 0.0)) throw InputError("config: affinity_eps must be positive");
  if (bound_gamma && !(*bound_gamma > 0.0)) throw InputError("config: bound.gamma must be positive");
  if (!(bound_R > 0.0)) throw InputError("config: bound.R must be positive");
}

double RunConfig::effective_lambda(double requested) const {
  switch (mode) {
    case Mode::kStl: return 0.0;
    case Mode::kMtl: return lambda_big;
    case Mode::kOurs: break;
  }
  return requested;
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    reject_unknown_keys(j,
                        {"manifest", "data_format", "kernels", "gaussian_convention", "train",
                         "grid", "mode", "lambda_big", "seed", "threads", "split", "preprocess",
                         "output_dir", "emit", "affinity_eps", "bound"},
                        "config");
    if (!j.contains("manifest")) throw InputError("config: 'manifest' is required");
    c.manifest = resolve(base_dir, j.at("manifest").get<std::string>());
    c.data_format = parse_format(j.value("data_format", std::string("sparse")));

    GaussianConvention convention = GaussianConvention::kSigma;
    const std::string conv = j.value("gaussian_convention", std::string("sigma"));
    if (conv == "gamma") {
      convention = GaussianConvention::kGamma;
    } else if (conv != "sigma") {
      throw InputError("config: gaussian_convention must be 'sigma' or 'gamma'");
    }
    if (!j.contains("kernels") || !j.at("kernels").is_array()) {
      throw InputError("config: 'kernels' must be a list");
    }
    for (const auto& k : j.at("kernels")) c.kernels.push_back(kernel_from_json(k, convention));

    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown_keys(t,
                          {"C", "lambda", "rho", "outer_tol", "outer_max_iters", "svm_tol",
                           "max_step_halvings", "admm"},
                          "train");
      c.train.C = t.value("C", c.train.C);
      c.train.lambda = t.value("lambda", c.train.lambda);
      c.train.rho = t.value("rho", c.train.rho);
      c.train.outer_tol = t.value("outer_tol", c.train.outer_tol);
      c.train.outer_max_iters = t.value("outer_max_iters", c.train.outer_max_iters);
      c.train.svm_tol = t.value("svm_tol", c.train.svm_tol);
      c.train.max_step_halvings = t.value("max_step_halvings", c.train.max_step_halvings);
      if (t.contains("admm")) {
        const json& a = t.at("admm");
        reject_unknown_keys(a,
                            {"eps_abs", "eps_rel", "gap_rel", "max_iterations", "projection",
                             "divisor", "adaptive_rho"},
                            "train.admm");
        c.train.admm.eps_abs = a.value("eps_abs", c.train.admm.eps_abs);
        c.train.admm.eps_rel = a.value("eps_rel", c.train.admm.eps_rel);
        c.train.admm.gap_rel = a.value("gap_rel", c.train.admm.gap_rel);
        if (!(c.train.admm.gap_rel >= 0.0)) throw InputError("config: train.admm.gap_rel must be >= 0");
        c.train.admm.max_iterations = a.value("max_iterations", c.train.admm.max_iterations);
        const std::string proj = a.value("projection", std::string("exact"));
        if (proj == "exact") {
          c.train.projection = ProjectionMode::kExact;
        } else if (proj == "dykstra") {
          c.train.projection = ProjectionMode::kDykstra;
        } else {
          throw InputError("config: train.admm.projection must be 'exact' or 'dykstra'");
        }
        const std::string div = a.value("divisor", std::string("derived"));
        if (div == "derived") {
          c.train.divisor = ThetaDivisor::kDerived;
        } else if (div == "printed") {
          c.train.divisor = ThetaDivisor::kPrinted;
        } else {
          throw InputError("config: train.admm.divisor must be 'derived' or 'printed'");
        }
        c.train.adaptive_rho = a.value("adaptive_rho", false);
      }
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      reject_unknown_keys(g, {"C", "lambda"}, "grid");
      if (g.contains("C")) c.grid.C = g.at("C").get<std::vector<double>>();
      if (g.contains("lambda")) c.grid.lambda = g.at("lambda").get<std::vector<double>>();
    }
    c.mode = parse_mode(j.value("mode", std::string("ours")));
    c.lambda_big = j.value("lambda_big", c.lambda_big);
    c.train.seed = j.value("seed", std::uint64_t{0});
    c.train.threads = j.value("threads", default_thread_count());
    if (c.train.threads == 0) throw InputError("config: threads must be >= 1");
    if (j.contains("split")) {
      const json& s = j.at("split");
      reject_unknown_keys(s, {"train_frac", "balanced"}, "split");
      c.split.train_frac = s.value("train_frac", c.split.train_frac);
      c.split.balanced = s.value("balanced", false);
    }
    if (j.contains("preprocess")) {
      const json& p = j.at("preprocess");
      reject_unknown_keys(p, {"min_max_scale"}, "preprocess");
      c.min_max_scale = p.value("min_max_scale", false);
    }
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
    if (j.contains("emit")) {
      const json& e = j.at("emit");
      reject_unknown_keys(e, {"trace", "affinity", "bound"}, "emit");
      c.emit_trace = e.value("trace", true);
      c.emit_affinity = e.value("affinity", true);
      c.emit_bound = e.value("bound", false);
    }
    c.affinity_eps = j.value("affinity_eps", c.affinity_eps);
    if (j.contains("bound")) {
      const json& b = j.at("bound");
      reject_unknown_keys(b, {"gamma", "R"}, "bound");
      if (b.contains("gamma") && !b.at("gamma").is_null()) c.bound_gamma = b.at("gamma").get<double>();
      c.bound_R = b.value("R", 1.0);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  c.Validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(read_json(path), path.parent_path());
}

json run_config_to_json(const RunConfig& c) {
  json kernels = json::array();
  for (const auto& k : c.kernels) kernels.push_back(kernel_to_json(k));
  json j = {
      {"manifest", c.manifest.generic_string()},
      {"data_format", format_name(c.data_format)},
      {"kernels", kernels},
      {"train",
       {{"C", c.train.C},
        {"lambda", c.train.lambda},
        {"rho", c.train.rho},
        {"outer_tol", c.train.outer_tol},
        {"outer_max_iters", c.train.outer_max_iters},
        {"svm_tol", c.train.svm_tol},
        {"max_step_halvings", c.train.max_step_halvings},
        {"admm",
         {{"eps_abs", c.train.admm.eps_abs},
          {"eps_rel", c.train.admm.eps_rel},
          {"gap_rel", c.train.admm.gap_rel},
          {"max_iterations", c.train.admm.max_iterations},
          {"projection", projection_name(c.train.projection)},
          {"divisor", divisor_name(c.train.divisor)},
          {"adaptive_rho", c.train.adaptive_rho}}}}},
      {"grid", {{"C", c.grid.C}, {"lambda", c.grid.lambda}}},
      {"mode", mode_name(c.mode)},
      {"lambda_big", c.lambda_big},
      {"seed", c.train.seed},
      {"split", {{"train_frac", c.split.train_frac}, {"balanced", c.split.balanced}}},
      {"preprocess", {{"min_max_scale", c.min_max_scale}}},
      {"output_dir", c.output_dir.generic_string()},
      {"emit", {{"trace", c.emit_trace}, {"affinity", c.emit_affinity}, {"bound", c.emit_bound}}},
      {"affinity_eps", c.affinity_eps},
      {"bound", {{"gamma", c.bound_gamma ? json(*c.bound_gamma) : json(nullptr)}, {"R", c.bound_R}}}};
  // Thread count never changes results, so it stays out of the echo.
  return j;
}

std::vector<TaskDataset> prepare_tasks(const RunConfig& config) {
  const Manifest manifest = load_manifest(config.manifest);
  std::vector<TaskDataset> tasks = build_tasks(manifest, config.data_format);
  if (tasks.empty()) throw InputError("manifest yields no tasks");
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    SplitOptions opts = config.split;
    opts.seed = config.train.seed + t;
    try {
      tasks[t] = stratified_split(tasks[t], opts);
    } catch (const Error& e) {
      if (e.kind() == "split_error") throw SplitError("task '" + tasks[t].name + "': " + e.what());
      throw;
    }
  }
  if (config.min_max_scale) min_max_scale(tasks);
  for (const auto& ds : tasks) ds.Validate();
  return tasks;
}

std::vector<double> task_accuracies(const TrainedModel& model, const std::vector<TaskDataset>& tasks,
                                    IndexList Split::*rows) {
  if (model.tasks.size() != tasks.size()) throw InputError("accuracy: model and data task counts differ");
  std::vector<double> acc(tasks.size(), kNan);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const IndexList& idx = tasks[t].split.*rows;
    if (idx.empty()) continue;
    const Vector predicted = predict_labels(model, static_cast<Index>(t), tasks[t].features(idx));
    const Vector truth = tasks[t].labels(idx);
    Index correct = 0;
    for (Index i = 0; i < truth.size(); ++i) correct += (predicted(i) == truth(i));
    acc[t] = static_cast<double>(correct) / static_cast<double>(truth.size());
  }
  return acc;
}

double mean_accuracy(const std::vector<double>& accuracies) {
  double sum = 0.0;
  int count = 0;
  for (double a : accuracies) {
    if (std::isfinite(a)) {
      sum += a;
      ++count;
    }
  }
  return count ? sum / count : kNan;
}

Affinity task_affinity(const ThetaMatrix& theta, double eps) {
  const Index T = theta.rows();
  Affinity a;
  a.distances = Matrix::Zero(T, T);
  for (Index t = 0; t < T; ++t) {
    for (Index s = t + 1; s < T; ++s) {
      a.distances(t, s) = a.distances(s, t) = (theta.row(t) - theta.row(s)).norm();
    }
  }
  // Union-find over below-threshold pairs.
  std::vector<Index> parent(static_cast<std::size_t>(T));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (Index t = 0; t < T; ++t) {
    for (Index s = t + 1; s < T; ++s) {
      if (a.distances(t, s) < eps) {
        const Index rt = find(t), rs = find(s);
        if (rt != rs) parent[std::max(rt, rs)] = std::min(rt, rs);
      }
    }
  }
  std::vector<int> id_of_root(static_cast<std::size_t>(T), -1);
  a.group.resize(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    const Index r = find(t);
    if (id_of_root[r] < 0) id_of_root[r] = a.num_groups++;
    a.group[t] = id_of_root[r];
  }
  return a;
}

void write_affinity_csv(const fs::path& path, const Affinity& affinity,
                        const std::vector<std::string>& names) {
  std::string text = "task";
  for (const auto& n : names) text += "," + n;
  text += "\n";
  for (Index t = 0; t < affinity.distances.rows(); ++t) {
    text += names[t];
    for (Index s = 0; s < affinity.distances.cols(); ++s) {
      text += "," + format_number(affinity.distances(t, s));
    }
    text += "\n";
  }
  write_text(path, text);
}

void write_groups_csv(const fs::path& path, const Affinity& affinity,
                      const std::vector<std::string>& names) {
  std::string text = "task,group\n";
  for (std::size_t t = 0; t < names.size(); ++t) {
    text += names[t] + "," + std::to_string(affinity.group[t]) + "\n";
  }
  write_text(path, text);
}

void write_trace_csv(const fs::path& path, const TrainedModel& model) {
  std::string text =
      "iteration,objective,norm_term,hinge_term,fusion_term,admm_iterations,admm_converged,step,"
      "primal_1,primal_2,primal_3,dual_1,dual_2,dual_3\n";
  for (const auto& r : model.trace) {
    text += std::to_string(r.iteration) + "," + format_number(r.objective.total) + "," +
            format_number(r.objective.norm) + "," + format_number(r.objective.hinge) + "," +
            format_number(r.objective.fusion) + "," + std::to_string(r.admm_iterations) + "," +
            (r.admm_converged ? "1" : "0") + "," + format_number(r.step);
    for (double v : r.residuals.primal) text += "," + format_number(v);
    for (double v : r.residuals.dual) text += "," + format_number(v);
    text += "\n";
  }
  write_text(path, text);
}

const GridPoint& select_grid_point(const std::vector<GridPoint>& points) {
  const GridPoint* best = nullptr;
  for (const auto& p : points) {
    if (p.error || !std::isfinite(p.validation_accuracy)) continue;
    if (!best || p.validation_accuracy > best->validation_accuracy ||
        (p.validation_accuracy == best->validation_accuracy &&
         (p.lambda < best->lambda || (p.lambda == best->lambda && p.C < best->C)))) {
      best = &p;
    }
  }
  if (!best) {
    std::string causes;
    for (const auto& p : points) {
      causes += "\n  C=" + format_number(p.C) + " lambda=" + format_number(p.lambda) + ": " +
                (p.error ? *p.error : std::string("no validation accuracy"));
    }
    throw GridError("every grid point failed:" + causes);
  }
  return *best;
}

RunResult run_train(const RunConfig& config) {
  config.Validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<TaskDataset> tasks = prepare_tasks(config);
  const KernelBank bank = build_bank(tasks, config.kernels, config.train.threads);
  TrainConfig tc = config.train;
  tc.lambda = config.effective_lambda(tc.lambda);
  RunResult result;
  result.model = train(tasks, bank, tc);
  result.report = model_report(config, "train", result.model, tasks);
  result.report["timing"] = {{"wall_seconds", seconds_since(start)},
                             {"train_seconds", result.model.wall_seconds}};
  emit_outputs(config, result.model, result.report);
  return result;
}

RunResult run_grid(const RunConfig& config) {
  config.Validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<TaskDataset> tasks = prepare_tasks(config);
  for (const auto& ds : tasks) {
    if (ds.split.validation.empty()) {
      throw InputError("grid: task '" + ds.name + "' has an empty validation split");
    }
  }
  const KernelBank bank = build_bank(tasks, config.kernels, config.train.threads);

  std::vector<double> lambdas;
  if (config.mode == Mode::kOurs) {
    lambdas = config.grid.lambda;
  } else {
    lambdas = {config.effective_lambda(0.0)};
  }
  std::vector<GridPoint> points;
  for (double lambda : lambdas) {
    for (double C : config.grid.C) points.push_back({C, lambda, kNan, std::nullopt});
  }

  // Points run in parallel, each trainer single-threaded.
  parallel_for(points.size(), config.train.threads, [&](std::size_t i) {
    GridPoint& p = points[i];
    TrainConfig tc = config.train;
    tc.C = p.C;
    tc.lambda = p.lambda;
    tc.threads = 1;
    try {
      const TrainedModel m = train(tasks, bank, tc);
      p.validation_accuracy = mean_accuracy(task_accuracies(m, tasks, &Split::validation));
    } catch (const std::exception& e) {
      p.error = e.what();
    }
  });

  const GridPoint winner = select_grid_point(points);
  TrainConfig tc = config.train;
  tc.C = winner.C;
  tc.lambda = winner.lambda;
  RunResult result;
  result.model = train(tasks, bank, tc);
  result.report = model_report(config, "grid", result.model, tasks);

  json grid = json::array();
  for (const auto& p : points) {
    json entry = {{"C", p.C}, {"lambda", p.lambda}};
    if (p.error) {
      entry["error"] = *p.error;
    } else {
      entry["validation_accuracy"] = number_or_null(p.validation_accuracy);
    }
    grid.push_back(entry);
  }
  result.report["grid"] = {{"size", points.size()},
                           {"selected_validation_accuracy", winner.validation_accuracy},
                           {"points", grid}};
  result.report["timing"] = {{"wall_seconds", seconds_since(start)},
                             {"train_seconds", result.model.wall_seconds}};
  emit_outputs(config, result.model, result.report);
  return result;
}

json run_predict(const fs::path& model_path, const fs::path& data_path, DataFormat format,
                 const std::string& task, const fs::path& output_dir) {
  const TrainedModel model = load_model(model_path);
  Index t = -1;
  for (std::size_t i = 0; i < model.tasks.size(); ++i) {
    if (model.tasks[i].name == task) t = static_cast<Index>(i);
  }
  if (t < 0 && !task.empty() && std::all_of(task.begin(), task.end(), ::isdigit)) {
    const long idx = std::stol(task);
    if (idx < static_cast<long>(model.tasks.size())) t = idx;
  }
  if (t < 0) throw InputError("predict: model has no task '" + task + "'");
  const Index dim = model.tasks[static_cast<std::size_t>(t)].support_vectors.cols();
  const LabeledData data =
      format == DataFormat::kSparse ? load_sparse_file(data_path, dim) : load_dense_csv(data_path);
  const Vector f = decision_values(model, t, data.X);

  bool labelled = data.labels.size() > 0;
  for (Index i = 0; i < data.labels.size(); ++i) {
    labelled = labelled && (data.labels(i) == 1.0 || data.labels(i) == -1.0);
  }
  std::string text = "row,decision_value,predicted_label,label\n";
  Index correct = 0;
  for (Index i = 0; i < f.size(); ++i) {
    const double p = predicted_label(f(i));
    correct += (p == data.labels(i));
    text += std::to_string(i) + "," + format_number(f(i)) + "," + format_number(p) + "," +
            format_number(data.labels(i)) + "\n";
  }
  json report = header("predict");
  report["task"] = model.tasks[static_cast<std::size_t>(t)].name;
  report["n"] = f.size();
  report["accuracy"] = (labelled && f.size() > 0)
                           ? json(static_cast<double>(correct) / static_cast<double>(f.size()))
                           : json(nullptr);
  report["files"] = {{"predictions", "predictions.csv"}};
  validate_report(report);
  fs::create_directories(output_dir);
  write_text(output_dir / "predictions.csv", text);
  write_json(output_dir / "report.json", report);
  return report;
}

json run_affinity(const fs::path& model_path, double eps, const fs::path& output_dir) {
  if (!(eps > 0.0)) throw InputError("affinity: eps must be positive");
  const TrainedModel model = load_model(model_path);
  const Affinity a = task_affinity(model.theta(), eps);
  json report = header("affinity");
  report["tasks"] = task_names(model);
  report["affinity"] = affinity_json(a, eps);
  report["files"] = {{"affinity", "affinity.csv"}, {"groups", "groups.csv"}};
  validate_report(report);
  fs::create_directories(output_dir);
  write_affinity_csv(output_dir / "affinity.csv", a, task_names(model));
  write_groups_csv(output_dir / "groups.csv", a, task_names(model));
  write_json(output_dir / "report.json", report);
  return report;
}

json run_bound(double gamma, double R, double M, double n, double T, const fs::path& output_dir) {
  json report = header("bound");
  report["bound"] = {{"gamma", gamma}, {"R", R}, {"M", M}, {"n", n}, {"T", T},
                     {"value", bound_value(gamma, R, M, n, T)}};
  validate_report(report);
  if (!output_dir.empty()) {
    fs::create_directories(output_dir);
    write_json(output_dir / "report.json", report);
  }
  return report;
}

json without_timing(json report) {
  report.erase("timing");
  return report;
}

void validate_report(const json& r) {
  std::vector<std::string> issues;
  auto need = [&](const char* key, auto pred, const char* what) {
    if (!r.contains(key)) {
      issues.push_back(std::string("missing '") + key + "'");
    } else if (!pred(r.at(key))) {
      issues.push_back(std::string("'") + key + "' must be " + what);
    }
  };
  auto accuracy_ok = [](const json& v) {
    return v.is_null() || (v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0);
  };

  if (!r.is_object()) throw InputError("report: not a JSON object");
  need("format", [](const json& v) { return v == kReportFormat; }, "\"mtmkl-report\"");
  need("version", [](const json& v) { return v == kReportVersion; }, "1");
  const std::string command = r.value("command", std::string());

  if (command == "train" || command == "grid") {
    need("mode", [](const json& v) { return v == "ours" || v == "stl" || v == "mtl"; },
         "ours, stl or mtl");
    need("seed", [](const json& v) { return v.is_number_unsigned(); }, "a non-negative integer");
    need("selected",
         [](const json& v) {
           return v.is_object() && v.contains("C") && v.contains("lambda") &&
                  v["C"].is_number() && v["C"].get<double>() > 0.0 &&
                  v["lambda"].is_number() && v["lambda"].get<double>() >= 0.0;
         },
         "{C > 0, lambda >= 0}");
    need("tasks", [](const json& v) { return v.is_array() && !v.empty(); }, "a non-empty list");
    need("mean_test_accuracy", accuracy_ok, "null or in [0, 1]");
    need("mean_validation_accuracy", accuracy_ok, "null or in [0, 1]");
    need("objective", [](const json& v) { return v.is_number(); }, "a number");
    need("converged", [](const json& v) { return v.is_boolean(); }, "a boolean");
    need("files", [](const json& v) { return v.is_object() && v.contains("model"); },
         "an object naming the model");
    need("config", [](const json& v) { return v.is_object(); }, "an object");
    if (r.contains("tasks") && r["tasks"].is_array()) {
      for (const char* key : {"test_accuracy", "validation_accuracy"}) {
        double sum = 0.0;
        int count = 0;
        for (const auto& t : r["tasks"]) {
          if (!t.is_object() || !t.contains("name") || !t.contains(key) || !accuracy_ok(t[key])) {
            issues.push_back(std::string("task entry lacks a valid name or ") + key);
            continue;
          }
          if (t[key].is_number()) {
            sum += t[key].get<double>();
            ++count;
          }
        }
        const std::string mean_key = std::string("mean_") + key;
        if (count > 0 && r.contains(mean_key) && r[mean_key].is_number() &&
            std::abs(r[mean_key].get<double>() - sum / count) > 1e-12) {
          issues.push_back("'" + mean_key + "' is not the mean of the task accuracies");
        }
      }
    }
    if (r.contains("mode") && r.contains("selected") && r["selected"].is_object() &&
        r["mode"] == "stl" && r["selected"].value("lambda", -1.0) != 0.0) {
      issues.push_back("mode stl must record lambda = 0");
    }
    if (command == "grid") {
      need("grid", [](const json& v) { return v.is_object() && v.contains("points"); },
           "an object with points");
    }
  } else if (command == "predict") {
    need("task", [](const json& v) { return v.is_string(); }, "a string");
    need("accuracy", accuracy_ok, "null or in [0, 1]");
  } else if (command == "affinity") {
    need("affinity", [](const json& v) { return v.is_object() && v.contains("groups"); },
         "an object with groups");
  } else if (command == "bound") {
    need("bound", [](const json& v) { return v.is_object() && v.contains("value"); },
         "an object with a value");
  } else {
    issues.push_back("unknown command '" + command + "'");
  }

  if (!issues.empty()) {
    std::string msg = "report: schema violations:";
    for (const auto& i : issues) msg += "\n  " + i;
    throw InputError(msg);
  }
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

}  // namespace mtmkl
