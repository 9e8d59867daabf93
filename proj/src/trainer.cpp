#include "mtmkl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace mtmkl {

void TrainConfig::Validate() const {
  if (!(C > 0.0) || !std::isfinite(C)) throw InputError("TrainConfig: C must be > 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("TrainConfig: lambda must be >= 0");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InputError("TrainConfig: rho must be > 0");
  if (outer_max_iters < 1) throw InputError("TrainConfig: outer_max_iters must be >= 1");
  if (!(svm_tol > 0.0)) throw InputError("TrainConfig: svm_tol must be > 0");
  if (!(outer_tol >= 0.0)) throw InputError("TrainConfig: outer_tol must be >= 0");
  if (max_step_halvings < 0) throw InputError("TrainConfig: max_step_halvings must be >= 0");
}

ThetaMatrix TrainedModel::theta() const {
  const Index M = static_cast<Index>(kernels.size());
  ThetaMatrix out(num_tasks(), M);
  for (Index t = 0; t < num_tasks(); ++t) out.row(t) = tasks[t].theta.transpose();
  return out;
}

Vector TrainedModel::alpha(Index t) const {
  const TaskModel& task = tasks.at(static_cast<std::size_t>(t));
  Vector out = Vector::Zero(task.num_train);
  for (std::size_t k = 0; k < task.support_indices.size(); ++k) {
    out(task.support_indices[k]) = task.support_alpha(static_cast<Index>(k));
  }
  return out;
}

namespace {

constexpr double kFeasibilityTol = 1e-8;

// Re-throws a library error with the task name prefixed, keeping the type for
// the kinds callers dispatch on.
[[noreturn]] void rethrow_for_task(const std::string& task, const Error& e) {
  const std::string what = "task '" + task + "': " + e.what();
  if (dynamic_cast<const UnlearnableTaskError*>(&e)) throw UnlearnableTaskError(what);
  if (dynamic_cast<const InputError*>(&e)) throw InputError(what);
  if (dynamic_cast<const DegenerateSampleError*>(&e)) {
    throw DegenerateSampleError(what, static_cast<const DegenerateSampleError&>(e).sample());
  }
  throw Error(e.kind(), what);
}

struct TaskState {
  Vector alpha;
  double bias = 0.0;
  long iterations = 0;
  double kkt = 0.0;
  bool converged = true;
};

struct Problem {
  const KernelBank& bank;
  std::vector<Vector> labels;
  std::vector<std::string> names;
  double C;
  double svm_tol;
  std::size_t threads;
};

std::vector<TaskState> alpha_step(const Problem& problem, const ThetaMatrix& theta) {
  const std::size_t T = problem.labels.size();
  std::vector<TaskState> states(T);
  parallel_for(T, problem.threads, [&](std::size_t t) {
    SvmOptions options;
    options.tol = problem.svm_tol;
    TaskState& st = states[t];
    try {
      const Matrix K = combine(problem.bank, static_cast<Index>(t), theta.row(t).transpose());
      DualSolution sol = solve_dual(K, problem.labels[t], problem.C, options);
      st.alpha = std::move(sol.alpha);
      st.bias = sol.bias;
      st.iterations = sol.iterations;
      st.kkt = sol.kkt_violation;
    } catch (const SvmConvergenceError& e) {
      st.alpha = e.best().alpha;
      st.bias = e.best().bias;
      st.iterations = e.best().iterations;
      st.kkt = e.best().kkt_violation;
      st.converged = false;
    } catch (const Error& e) {
      rethrow_for_task(problem.names[t], e);
    }
  });
  return states;
}

ObjectiveTerms evaluate(const KernelBank& bank, const std::vector<Vector>& labels,
                        const ThetaMatrix& theta, const std::vector<Vector>& alphas,
                        const std::vector<double>& biases, double C, double lambda) {
  ObjectiveTerms terms;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const Matrix K = combine(bank, static_cast<Index>(t), theta.row(t).transpose());
    const Vector ay = alphas[t].cwiseProduct(labels[t]);
    const Vector Kay = K * ay;
    terms.norm += 0.5 * ay.dot(Kay);
    for (Index i = 0; i < Kay.size(); ++i) {
      terms.hinge += std::max(0.0, 1.0 - labels[t](i) * (Kay(i) + biases[t]));
    }
  }
  terms.fusion = fusion_penalty(theta);
  terms.total = terms.norm + C * terms.hinge + lambda * terms.fusion;
  return terms;
}

ObjectiveTerms evaluate_states(const Problem& problem, const ThetaMatrix& theta,
                               const std::vector<TaskState>& states, double lambda) {
  std::vector<Vector> alphas;
  std::vector<double> biases;
  for (const auto& st : states) {
    alphas.push_back(st.alpha);
    biases.push_back(st.bias);
  }
  return evaluate(problem.bank, problem.labels, theta, alphas, biases, problem.C, lambda);
}

Matrix q_matrix(const Problem& problem, const std::vector<TaskState>& states) {
  const Index T = static_cast<Index>(states.size());
  Matrix q(T, problem.bank.num_kernels());
  for (Index t = 0; t < T; ++t) {
    q.row(t) = compute_q(problem.bank, t, problem.labels[t], states[t].alpha).transpose();
  }
  return q;
}

void check_theta_feasible(const ThetaMatrix& theta, const char* where) {
  for (Index t = 0; t < theta.rows(); ++t) {
    if (theta.row(t).minCoeff() < -1e-12 || theta.row(t).sum() > 1.0 + kFeasibilityTol) {
      throw ContractError(std::string(where) + ": theta row " + std::to_string(t) +
                          " is outside {x >= 0, |x|_1 <= 1}");
    }
  }
}

TaskModel make_task_model(const TaskDataset& ds, const TaskState& st, const Vector& theta) {
  TaskModel model;
  model.name = ds.name;
  model.theta = theta;
  model.bias = st.bias;
  model.num_train = st.alpha.size();
  model.svm_iterations = st.iterations;
  model.kkt_violation = st.kkt;
  for (Index i = 0; i < st.alpha.size(); ++i) {
    if (st.alpha(i) > 0.0) model.support_indices.push_back(i);
  }
  const Index n_sv = static_cast<Index>(model.support_indices.size());
  model.support_alpha.resize(n_sv);
  model.support_labels.resize(n_sv);
  model.support_vectors.resize(n_sv, ds.X.cols());
  for (Index k = 0; k < n_sv; ++k) {
    const Index local = model.support_indices[static_cast<std::size_t>(k)];
    const Index row = ds.split.train[static_cast<std::size_t>(local)];
    model.support_alpha(k) = st.alpha(local);
    model.support_labels(k) = ds.y(row);
    model.support_vectors.row(k) = ds.X.row(row);
  }
  return model;
}

KernelBank single_task_bank(const KernelBank& bank, Index t) {
  std::vector<GramMatrix> row;
  for (Index m = 0; m < bank.num_kernels(); ++m) row.push_back({0, m, bank.gram(t, m)});
  return KernelBank(bank.specs(), {row});
}

// Joint coordinate descent; lambda > 0 or a single task.
TrainedModel train_joint(const std::vector<TaskDataset>& data, const KernelBank& bank,
                         const TrainConfig& cfg) {
  const Index T = static_cast<Index>(data.size());
  const Index M = bank.num_kernels();
  Problem problem{bank, {}, {}, cfg.C, cfg.svm_tol, cfg.threads};
  for (const auto& ds : data) {
    problem.labels.push_back(ds.train_labels());
    problem.names.push_back(ds.name);
  }

  ThetaMatrix theta = cfg.theta_init ? *cfg.theta_init
                                     : ThetaMatrix::Constant(T, M, 1.0 / static_cast<double>(M));
  if (theta.rows() != T || theta.cols() != M) throw InputError("train: theta_init must be T x M");
  check_theta_feasible(theta, "train: theta_init");

  AdmmOptions admm;
  admm.rho = cfg.rho;
  admm.tolerances = cfg.admm;
  admm.projection = cfg.projection;
  admm.divisor = cfg.divisor;
  admm.adaptive_rho = cfg.adaptive_rho;

  TrainedModel model;
  model.kernels = bank.specs();
  model.C = cfg.C;
  model.lambda = cfg.lambda;
  model.seed = cfg.seed;

  std::vector<TaskState> states = alpha_step(problem, theta);
  ObjectiveTerms current = evaluate_states(problem, theta, states, cfg.lambda);
  IterationRecord initial;
  initial.objective = current;
  model.trace.push_back(initial);

  std::optional<AdmmState> warm;
  bool converged = false;
  for (long r = 1; r <= cfg.outer_max_iters; ++r) {
    const Matrix q = q_matrix(problem, states);
    ThetaSolution step;
    try {
      step = solve_theta(q, cfg.lambda, admm, warm ? &*warm : nullptr);
    } catch (const AdmmConvergenceError& e) {
      step = e.last();
      model.warnings.push_back("outer iteration " + std::to_string(r) + ": " + e.what());
    }
    warm = step.state;

    const ThetaMatrix direction = step.theta - theta;
    double fraction = 1.0;
    bool accepted = false;
    ThetaMatrix trial_theta;
    std::vector<TaskState> trial_states;
    ObjectiveTerms trial;
    for (int h = 0; h <= cfg.max_step_halvings; ++h, fraction *= 0.5) {
      trial_theta = theta + fraction * direction;
      trial_states = alpha_step(problem, trial_theta);
      trial = evaluate_states(problem, trial_theta, trial_states, cfg.lambda);
      if (trial.total <= current.total) {
        accepted = true;
        break;
      }
    }

    IterationRecord record;
    record.iteration = r;
    record.admm_iterations = step.state.iterations;
    record.admm_converged = step.converged;
    if (!step.state.residuals.empty()) record.residuals = step.state.residuals.back();
    model.admm_iterations.push_back(step.state.iterations);

    if (!accepted) {
      // No descent along the theta step: the current iterate is kept.
      record.objective = current;
      record.step = 0.0;
      model.trace.push_back(record);
      converged = true;
      break;
    }
    const double change =
        (current.total - trial.total) / std::max(std::abs(current.total), 1e-300);
    theta = trial_theta;
    states = std::move(trial_states);
    current = trial;
    record.objective = current;
    record.step = fraction;
    model.trace.push_back(record);
    check_theta_feasible(theta, "train");
    if (change < cfg.outer_tol) {
      converged = true;
      break;
    }
  }

  model.outer_iterations = static_cast<long>(model.trace.size()) - 1;
  model.converged = converged;
  model.objective = current.total;
  for (Index t = 0; t < T; ++t) {
    model.tasks.push_back(make_task_model(data[static_cast<std::size_t>(t)],
                                          states[static_cast<std::size_t>(t)],
                                          theta.row(t).transpose()));
    if (!states[static_cast<std::size_t>(t)].converged) {
      model.warnings.push_back("task '" + data[static_cast<std::size_t>(t)].name +
                               "': SVM dual hit its iteration cap");
    }
  }
  if (!converged) {
    model.warnings.push_back("outer loop reached " + std::to_string(cfg.outer_max_iters) +
                             " iterations without meeting outer_tol");
  }
  return model;
}

// lambda = 0: the problem separates, each task runs its own loop.
TrainedModel train_independent(const std::vector<TaskDataset>& data, const KernelBank& bank,
                               const TrainConfig& cfg) {
  const Index T = static_cast<Index>(data.size());
  std::vector<TrainedModel> parts(static_cast<std::size_t>(T));
  TrainConfig single = cfg;
  single.threads = 1;
  parallel_for(static_cast<std::size_t>(T), cfg.threads, [&](std::size_t t) {
    TrainConfig c = single;
    if (cfg.theta_init) c.theta_init = ThetaMatrix(cfg.theta_init->row(static_cast<Index>(t)));
    parts[t] = train_joint({data[t]}, single_task_bank(bank, static_cast<Index>(t)), c);
  });

  TrainedModel model;
  model.kernels = bank.specs();
  model.C = cfg.C;
  model.lambda = cfg.lambda;
  model.seed = cfg.seed;
  model.converged = true;
  std::size_t longest = 0;
  for (const auto& part : parts) longest = std::max(longest, part.trace.size());
  model.trace.resize(longest);
  model.admm_iterations.assign(longest > 0 ? longest - 1 : 0, 0);
  for (std::size_t r = 0; r < longest; ++r) {
    IterationRecord& rec = model.trace[r];
    rec.iteration = static_cast<long>(r);
    rec.step = 1.0;
    for (const auto& part : parts) {
      const IterationRecord& src = part.trace[std::min(r, part.trace.size() - 1)];
      rec.objective.norm += src.objective.norm;
      rec.objective.hinge += src.objective.hinge;
      rec.objective.total += src.objective.total;
      if (r < part.trace.size()) {
        rec.admm_iterations += src.admm_iterations;
        rec.admm_converged = rec.admm_converged && src.admm_converged;
        rec.step = std::min(rec.step, src.step);
      }
    }
    if (r > 0) model.admm_iterations[r - 1] = rec.admm_iterations;
  }
  for (auto& part : parts) {
    model.objective += part.objective;
    model.converged = model.converged && part.converged;
    for (auto& w : part.warnings) model.warnings.push_back(part.tasks[0].name + ": " + w);
    model.tasks.push_back(std::move(part.tasks[0]));
  }
  model.outer_iterations = static_cast<long>(longest) - 1;
  return model;
}

}  // namespace

TrainedModel train(const std::vector<TaskDataset>& data, const KernelBank& bank,
                   const TrainConfig& config) {
  config.Validate();
  const auto start = std::chrono::steady_clock::now();
  if (data.empty()) throw InputError("train: no tasks");
  if (bank.num_tasks() != static_cast<Index>(data.size())) {
    throw InputError("train: kernel bank has " + std::to_string(bank.num_tasks()) +
                     " tasks, data has " + std::to_string(data.size()));
  }
  for (std::size_t t = 0; t < data.size(); ++t) {
    try {
      data[t].Validate();
    } catch (const Error& e) {
      rethrow_for_task(data[t].name, e);
    }
    if (bank.task_size(static_cast<Index>(t)) != static_cast<Index>(data[t].split.train.size())) {
      throw InputError("train: kernel bank was not built on task '" + data[t].name +
                       "' training split");
    }
  }

  TrainedModel model = (config.lambda == 0.0 && data.size() > 1)
                           ? train_independent(data, bank, config)
                           : train_joint(data, bank, config);
  model.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

ObjectiveTerms primal_objective_terms(const KernelBank& bank, const TrainedModel& model,
                                      const std::vector<TaskDataset>& data, double C,
                                      double lambda) {
  const Index T = model.num_tasks();
  if (T != static_cast<Index>(data.size()) || bank.num_tasks() != T) {
    throw InputError("primal_objective: model, data and bank disagree on the task count");
  }
  const ThetaMatrix theta = model.theta();
  check_theta_feasible(theta, "primal_objective");
  std::vector<Vector> labels;
  std::vector<Vector> alphas;
  std::vector<double> biases;
  for (Index t = 0; t < T; ++t) {
    const TaskDataset& ds = data[static_cast<std::size_t>(t)];
    labels.push_back(ds.train_labels());
    alphas.push_back(model.alpha(t));
    biases.push_back(model.tasks[static_cast<std::size_t>(t)].bias);
    const Vector& a = alphas.back();
    if (a.size() != labels.back().size()) {
      throw InputError("primal_objective: model and data disagree on task '" + ds.name + "'");
    }
    if (a.minCoeff() < -1e-10 || a.maxCoeff() > C + 1e-10 ||
        std::abs(a.dot(labels.back())) > 1e-8 * std::max(1.0, a.sum())) {
      throw ContractError("primal_objective: alpha of task '" + ds.name +
                          "' is outside {0 <= a <= C, a'y = 0}");
    }
  }
  return evaluate(bank, labels, theta, alphas, biases, C, lambda);
}

double primal_objective(const KernelBank& bank, const TrainedModel& model,
                        const std::vector<TaskDataset>& data, double C, double lambda) {
  return primal_objective_terms(bank, model, data, C, lambda).total;
}

Vector decision_values(const TrainedModel& model, Index t, const Matrix& X) {
  if (t < 0 || t >= model.num_tasks()) throw InputError("decision_values: task index out of range");
  const TaskModel& task = model.tasks[static_cast<std::size_t>(t)];
  if (task.support_vectors.rows() == 0) return Vector::Constant(X.rows(), task.bias);
  if (X.cols() != task.support_vectors.cols()) {
    throw InputError("decision_values: query has " + std::to_string(X.cols()) +
                     " features, model expects " + std::to_string(task.support_vectors.cols()));
  }
  Matrix cross = Matrix::Zero(task.support_vectors.rows(), X.rows());
  for (std::size_t m = 0; m < model.kernels.size(); ++m) {
    const double w = task.theta(static_cast<Index>(m));
    if (w == 0.0) continue;
    cross.noalias() += w * normalized_cross_gram(model.kernels[m], task.support_vectors, X);
  }
  return decision_values(cross, task.support_labels, task.support_alpha, task.bias);
}

Vector predict_labels(const TrainedModel& model, Index t, const Matrix& X) {
  return decision_values(model, t, X).unaryExpr([](double f) { return predicted_label(f); });
}

double bound_value(double gamma, double R, double M, double n, double T) {
  for (double v : {gamma, R, M, n, T}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("bound_value: inputs must be positive");
  }
  return std::sqrt(std::sqrt(3.0) * gamma * R * M / (n * T));
}

}  // namespace mtmkl
