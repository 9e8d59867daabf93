#ifndef MTMKL_THETA_ADMM_HPP_
#define MTMKL_THETA_ADMM_HPP_

#include <array>
#include <optional>
#include <ostream>
#include <vector>

#include "mtmkl/common.hpp"

namespace mtmkl {

//! Row t holds the kernel weights theta_t of task t (T x M).
using ThetaMatrix = Matrix;

//! Pair i <-> (t, s), t < s, in lexicographic order.
struct PairIndex {
  Index i = 0;
  Index t = 0;
  Index s = 0;
};

std::vector<PairIndex> enumerate_pairs(Index num_tasks);

//! Vector soft-thresholding (1 - kappa/|a|)_+ a, with shrink(0) = 0.
template <typename Derived>
Vector shrink(const Eigen::MatrixBase<Derived>& a, double kappa) {
  const double norm = a.norm();
  if (norm <= kappa || norm == 0.0) return Vector::Zero(a.size());
  return (1.0 - kappa / norm) * a;
}

//! Euclidean projection onto {x >= 0, |x|_1 <= 1}: clip, then simplex
//! projection by sort-and-threshold when the clipped mass exceeds 1.
Vector project_box_l1(const Eigen::Ref<const Vector>& p);

//! Projection onto the nonnegative orthant.
inline Vector project_orthant(const Eigen::Ref<const Vector>& p) { return p.cwiseMax(0.0); }

//! Projection onto the l1 ball {|x|_1 <= 1}.
Vector project_l1_ball(const Eigen::Ref<const Vector>& p);

//! Boyle-Dykstra alternating projections between the orthant and the l1 ball.
//! Converges to project_box_l1(p).
Vector project_dykstra(const Eigen::Ref<const Vector>& p, long max_iterations = 100000,
                       double tol = 1e-14);

//! lambda * sum_{t<s} |theta_t - theta_s|_2 + sum_t theta_t' q_t.
double theta_objective(const ThetaMatrix& theta, const Matrix& q, double lambda);

//! sum_{t<s} |theta_t - theta_s|_2.
double fusion_penalty(const ThetaMatrix& theta);

enum class ProjectionMode {
  kExact,    //!< z_t = project_box_l1(theta_t - v_t)
  kDykstra,  //!< one orthant / l1-ball Dykstra sweep per iteration, state in y and beta
};

enum class ThetaDivisor {
  kDerived,  //!< 1/T: stationarity of the theta sub-step
  kPrinted,  //!< 1/(T-1): compatibility form
};

struct StoppingTolerances {
  double eps_abs = 1e-4;
  double eps_rel = 1e-3;
  long max_iterations = 5000;
  //! Once the residual test passes, iteration continues until the polished
  //! iterate is within this relative duality gap of theta_dual_bound, or the
  //! cap is reached with the residual test still met. 0 turns the check off.
  double gap_rel = 1e-6;
};

struct AdmmOptions {
  double rho = 1.0;
  StoppingTolerances tolerances;
  ProjectionMode projection = ProjectionMode::kExact;
  ThetaDivisor divisor = ThetaDivisor::kDerived;
  //! Doubles / halves rho when the primal / dual residual ratio exceeds 10.
  bool adaptive_rho = false;
  //! When set, one CSV row per iteration (see write_trace_header).
  std::ostream* trace = nullptr;
};

//! Residual norms of one iteration and the tolerances they are tested against.
//! Index 0..2 maps to (s - theta~, z - theta, y - z) for primal and
//! rho*(theta change, z change, y change) for dual.
struct ResidualNorms {
  std::array<double, 3> primal{};
  std::array<double, 3> dual{};
  std::array<double, 3> eps_primal{};
  std::array<double, 3> eps_dual{};

  bool satisfied() const;
};

//! Consensus ADMM iterate. Pair quantities are stored as N x M matrices, one
//! for each half of the local copy s_i = ((s_i)_1, (s_i)_2).
struct AdmmState {
  Index num_tasks = 0;
  Index num_kernels = 0;
  double rho = 1.0;
  Matrix s_first, s_second;  //!< local copies
  Matrix u_first, u_second;  //!< scaled duals for s_i = theta~_i
  ThetaMatrix theta;         //!< global variable
  Matrix z;                  //!< projected copy of theta
  Matrix v;                  //!< scaled dual for z = theta
  Matrix y;                  //!< orthant iterate (Dykstra mode)
  Matrix beta;               //!< Dykstra correction
  std::vector<ResidualNorms> residuals;
  long iterations = 0;

  //! All local copies equal theta0, all duals zero.
  static AdmmState Initialize(const ThetaMatrix& theta0, double rho);

  Index num_pairs() const { return s_first.rows(); }
  void CheckShape(Index T, Index M) const;
};

// Individual ADMM steps; solve_theta chains them.

//! s_i = exact prox of lambda |(s)_1 - (s)_2| at p = theta~_i - u_i: the pair
//! mean is kept and the difference is shrunk with threshold 2 lambda / rho.
void s_update(AdmmState& state, double lambda);

//! Closed-form minimizer of the augmented Lagrangian over theta.
void theta_update(AdmmState& state, const Matrix& q, ThetaDivisor divisor = ThetaDivisor::kDerived);

void z_update(AdmmState& state, ProjectionMode mode = ProjectionMode::kExact);

//! u_i += s_i - theta~_i,  v += z - theta.
void dual_updates(AdmmState& state);

struct ThetaSolution {
  ThetaMatrix theta;  //!< feasible: rows projected onto {x >= 0, |x|_1 <= 1}
  AdmmState state;
  bool converged = true;
  double objective = 0.0;
  double lower_bound = 0.0;  //!< certified: objective - lower_bound bounds the error
};

//! Lagrangian lower bound on the optimum, using the pair multipliers
//! w_i = rho (u_second - u_first) / 2 clipped to the lambda ball:
//! sum_t min(0, min_m (q_t + sum_{i: t first} w_i - sum_{i: t second} w_i)_m).
double theta_dual_bound(const AdmmState& state, const Matrix& q, double lambda);

//! Best feasible point among the projected z iterate and two repairs of it:
//! rows snapped to the vertex their reduced cost singles out, and tasks closer
//! than a threshold merged at their mean. Never worse than project(z).
ThetaMatrix polish_theta(const AdmmState& state, const Matrix& q, double lambda);

//! ADMM stopped at the iteration cap. Carries the last state.
class AdmmConvergenceError : public ConvergenceError {
 public:
  AdmmConvergenceError(const std::string& what, ThetaSolution last)
      : ConvergenceError(what), last_(std::move(last)) {}
  const ThetaSolution& last() const noexcept { return last_; }

 private:
  ThetaSolution last_;
};

//! Exact solution for lambda = 0: each row puts unit mass on its most negative
//! q coordinate (lowest index on ties), or is zero when min q > 0.
ThetaMatrix solve_theta_independent(const Matrix& q);

//! Minimizes lambda * fusion_penalty(theta) + sum_t theta_t'q_t over rows in
//! {x >= 0, |x|_1 <= 1}. `q` is T x M. When `warm` is given its s, u, z, v,
//! beta are reused (rho is taken from options). lambda = 0 is solved exactly.
ThetaSolution solve_theta(const Matrix& q, double lambda, const AdmmOptions& options = {},
                          const AdmmState* warm = nullptr);

void write_trace_header(std::ostream& out);

}  // namespace mtmkl

#endif  // MTMKL_THETA_ADMM_HPP_
