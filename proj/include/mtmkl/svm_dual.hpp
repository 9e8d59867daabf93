#ifndef MTMKL_SVM_DUAL_HPP_
#define MTMKL_SVM_DUAL_HPP_

#include <functional>

#include "mtmkl/common.hpp"
#include "mtmkl/kernel_bank.hpp"

namespace mtmkl {

//! Solution of  max_a 1'a - 1/2 a'YKYa  s.t. 0 <= a <= C, a'y = 0.
struct DualSolution {
  Vector alpha;
  double bias = 0.0;
  double objective = 0.0;      //!< dual objective at alpha
  double kkt_violation = 0.0;  //!< maximal-violating-pair gap
  long iterations = 0;
};

struct SvmOptions {
  double tol = 1e-3;
  //! 0 selects the default cap of 10 * n * 1000.
  long max_iterations = 0;
  //! Called with the dual objective after every SMO step (diagnostics).
  std::function<void(long, double)> on_iteration;
};

//! Iteration cap exceeded; carries the last (best, SMO is monotone) iterate.
class SvmConvergenceError : public ConvergenceError {
 public:
  SvmConvergenceError(const std::string& what, DualSolution best)
      : ConvergenceError(what), best_(std::move(best)) {}
  const DualSolution& best() const noexcept { return best_; }

 private:
  DualSolution best_;
};

//! SMO with maximal-violating-pair working-set selection (ties -> lowest
//! index). Bias is the mean of y_i - (K(a.y))_i over free support vectors, or
//! the midpoint of the KKT interval when none is free.
DualSolution solve_dual(const Matrix& K, const Vector& y, double C,
                        const SvmOptions& options = {});

//! Dual objective 1'a - 1/2 (a.y)'K(a.y).
double dual_objective(const Matrix& K, const Vector& y, const Vector& alpha);

//! Maximal KKT violation m(a) - M(a) of a feasible alpha (0 when optimal).
double kkt_violation(const Matrix& K, const Vector& y, const Vector& alpha, double C);

//! q_t^m = -1/2 (a.y)' K_t^m (a.y) for every kernel m.
Vector compute_q(const KernelBank& bank, Index t, const Vector& y, const Vector& alpha);

//! f(x_j) = sum_i a_i y_i K(i, j) + b given the train-by-query kernel block.
Vector decision_values(const Matrix& cross_kernel, const Vector& y, const Vector& alpha,
                       double bias);

//! sign with sign(0) = +1.
inline double predicted_label(double decision) { return decision >= 0.0 ? 1.0 : -1.0; }

}  // namespace mtmkl

#endif  // MTMKL_SVM_DUAL_HPP_
