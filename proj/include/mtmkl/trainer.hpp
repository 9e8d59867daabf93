#ifndef MTMKL_TRAINER_HPP_
#define MTMKL_TRAINER_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtmkl/common.hpp"
#include "mtmkl/dataset.hpp"
#include "mtmkl/kernel_bank.hpp"
#include "mtmkl/svm_dual.hpp"
#include "mtmkl/theta_admm.hpp"

namespace mtmkl {

struct TrainConfig {
  double C = 1.0;
  double lambda = 0.0;
  double rho = 1.0;
  double outer_tol = 1e-4;  //!< relative primal objective change
  long outer_max_iters = 50;
  double svm_tol = 1e-3;
  StoppingTolerances admm;
  ProjectionMode projection = ProjectionMode::kExact;
  ThetaDivisor divisor = ThetaDivisor::kDerived;
  bool adaptive_rho = false;
  //! Halvings tried on the theta step before declaring no further descent.
  int max_step_halvings = 12;
  std::uint64_t seed = 0;
  //! Starting weights; uniform 1/M rows when unset.
  std::optional<ThetaMatrix> theta_init;
  std::size_t threads = 1;

  //! Throws InputError unless C > 0, lambda >= 0, rho > 0, outer_max_iters >= 1.
  void Validate() const;
};

//! Terms of the regularized risk: sum_t |w_t|^2/2 + C * hinge + lambda * fusion.
struct ObjectiveTerms {
  double norm = 0.0;    //!< sum_t |w_t|^2 / 2
  double hinge = 0.0;   //!< sum_{t,i} [1 - y f]_+ (before multiplying by C)
  double fusion = 0.0;  //!< sum_{t<s} |theta_t - theta_s|_2 (before lambda)
  double total = 0.0;
};

//! One record per outer iteration; iteration 0 is the initial alpha-step.
struct IterationRecord {
  long iteration = 0;
  ObjectiveTerms objective;
  long admm_iterations = 0;
  bool admm_converged = true;
  double step = 0.0;  //!< accepted fraction of the theta step
  ResidualNorms residuals;
};

struct TaskModel {
  std::string name;
  Vector theta;
  double bias = 0.0;
  IndexList support_indices;  //!< positions within the task's training split
  Vector support_alpha;
  Vector support_labels;
  Matrix support_vectors;
  Index num_train = 0;
  long svm_iterations = 0;
  double kkt_violation = 0.0;
};

struct TrainedModel {
  std::vector<KernelSpec> kernels;
  std::vector<TaskModel> tasks;
  double C = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double objective = 0.0;
  std::vector<IterationRecord> trace;
  long outer_iterations = 0;
  std::vector<long> admm_iterations;  //!< per outer iteration
  bool converged = false;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;

  Index num_tasks() const { return static_cast<Index>(tasks.size()); }
  ThetaMatrix theta() const;
  //! Dense alpha over the task's training samples.
  Vector alpha(Index t) const;
};

//! Evaluates the regularized risk of a model on its training data.
//! Throws ContractError when theta or alpha leave their feasible sets.
double primal_objective(const KernelBank& bank, const TrainedModel& model,
                        const std::vector<TaskDataset>& data, double C, double lambda);
ObjectiveTerms primal_objective_terms(const KernelBank& bank, const TrainedModel& model,
                                      const std::vector<TaskDataset>& data, double C,
                                      double lambda);

//! Alternates per-task dual solves and the fused theta step until the relative
//! objective change drops below outer_tol. Each theta step is damped by
//! halving until the objective does not increase, so the recorded trace is
//! non-increasing. With lambda = 0 the tasks are trained independently.
TrainedModel train(const std::vector<TaskDataset>& data, const KernelBank& bank,
                   const TrainConfig& config);

//! f_t(x) for each row of X using the theta_t-combined normalized kernel.
Vector decision_values(const TrainedModel& model, Index t, const Matrix& X);
Vector predict_labels(const TrainedModel& model, Index t, const Matrix& X);

//! sqrt(sqrt(3) gamma R M / (n T)); diagnostic upper bound of the empirical
//! Rademacher complexity. Throws InputError on non-positive input.
double bound_value(double gamma, double R, double M, double n, double T);

}  // namespace mtmkl

#endif  // MTMKL_TRAINER_HPP_
