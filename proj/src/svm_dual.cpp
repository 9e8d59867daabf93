#include "mtmkl/svm_dual.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace mtmkl {

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_problem(const Matrix& K, const Vector& y, double C) {
  const Index n = y.size();
  if (K.rows() != n || K.cols() != n) {
    throw InputError("solve_dual: kernel is " + std::to_string(K.rows()) + "x" +
                     std::to_string(K.cols()) + " but there are " + std::to_string(n) +
                     " labels");
  }
  if (!(C >= 0.0) || !std::isfinite(C)) throw InputError("solve_dual: C must be finite and >= 0");
  bool has_pos = false;
  bool has_neg = false;
  for (Index i = 0; i < n; ++i) {
    if (y(i) == 1.0) {
      has_pos = true;
    } else if (y(i) == -1.0) {
      has_neg = true;
    } else {
      throw InputError("solve_dual: labels must be +1 or -1");
    }
  }
  if (!has_pos || !has_neg) {
    throw UnlearnableTaskError("solve_dual: training labels contain a single class");
  }
  const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InputError("solve_dual: kernel matrix is not symmetric");
  }
}

bool in_up(double y, double a, double C) { return (y > 0) ? a < C : a > 0; }
bool in_low(double y, double a, double C) { return (y > 0) ? a > 0 : a < C; }

// Maximal violating pair on gradient G of f = 1/2 a'Qa - 1'a. Returns the gap
// m - M and writes the pair; i or j is -1 when its set is empty.
double select_pair(const Vector& y, const Vector& alpha, const Vector& G, double C, Index& i,
                   Index& j) {
  double gmax = -kInf;
  double gmin = kInf;
  i = -1;
  j = -1;
  for (Index t = 0; t < y.size(); ++t) {
    const double v = -y(t) * G(t);
    if (in_up(y(t), alpha(t), C) && v > gmax) {
      gmax = v;
      i = t;
    }
    if (in_low(y(t), alpha(t), C) && v < gmin) {
      gmin = v;
      j = t;
    }
  }
  if (i < 0 || j < 0) return 0.0;
  return gmax - gmin;
}

double compute_bias(const Vector& y, const Vector& alpha, const Vector& G, double C) {
  double ub = kInf;
  double lb = -kInf;
  double sum_free = 0.0;
  long n_free = 0;
  for (Index t = 0; t < y.size(); ++t) {
    const double yg = y(t) * G(t);
    if (alpha(t) >= C) {
      if (y(t) < 0) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else if (alpha(t) <= 0) {
      if (y(t) > 0) {
        ub = std::min(ub, yg);
      } else {
        lb = std::max(lb, yg);
      }
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double r = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  return -r;
}

}  // namespace

double dual_objective(const Matrix& K, const Vector& y, const Vector& alpha) {
  const Vector ay = alpha.cwiseProduct(y);
  return alpha.sum() - 0.5 * ay.dot(K * ay);
}

double kkt_violation(const Matrix& K, const Vector& y, const Vector& alpha, double C) {
  const Vector ay = alpha.cwiseProduct(y);
  const Vector G = y.cwiseProduct(K * ay) - Vector::Ones(y.size());
  Index i = 0;
  Index j = 0;
  return std::max(0.0, select_pair(y, alpha, G, C, i, j));
}

DualSolution solve_dual(const Matrix& K, const Vector& y, double C, const SvmOptions& options) {
  check_problem(K, y, C);
  const Index n = y.size();
  const long cap = options.max_iterations > 0 ? options.max_iterations : 10L * n * 1000L;

  DualSolution sol;
  sol.alpha = Vector::Zero(n);
  Vector G = -Vector::Ones(n);
  if (C == 0.0) {
    sol.bias = compute_bias(y, sol.alpha, G, C);
    return sol;
  }

  const Matrix Q = y.asDiagonal() * K * y.asDiagonal();
  Vector& alpha = sol.alpha;
  long iter = 0;
  double gap = 0.0;
  for (;;) {
    Index i = 0;
    Index j = 0;
    gap = select_pair(y, alpha, G, C, i, j);
    if (i < 0 || j < 0 || gap <= options.tol) break;
    if (iter >= cap) {
      sol.iterations = iter;
      sol.kkt_violation = gap;
      sol.objective = -0.5 * alpha.dot(G - Vector::Ones(n));
      sol.bias = compute_bias(y, alpha, G, C);
      std::ostringstream msg;
      msg << "solve_dual: iteration cap " << cap << " reached with KKT violation " << gap;
      throw SvmConvergenceError(msg.str(), sol);
    }
    ++iter;

    const double old_ai = alpha(i);
    const double old_aj = alpha(j);
    if (y(i) != y(j)) {
      double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-G(i) - G(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0) {
        if (alpha(j) < 0) {
          alpha(j) = 0;
          alpha(i) = diff;
        }
      } else {
        if (alpha(i) < 0) {
          alpha(i) = 0;
          alpha(j) = -diff;
        }
      }
      if (diff > 0) {
        if (alpha(i) > C) {
          alpha(i) = C;
          alpha(j) = C - diff;
        }
      } else {
        if (alpha(j) > C) {
          alpha(j) = C;
          alpha(i) = C + diff;
        }
      }
    } else {
      double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (G(i) - G(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > C) {
        if (alpha(i) > C) {
          alpha(i) = C;
          alpha(j) = sum - C;
        }
      } else {
        if (alpha(j) < 0) {
          alpha(j) = 0;
          alpha(i) = sum;
        }
      }
      if (sum > C) {
        if (alpha(j) > C) {
          alpha(j) = C;
          alpha(i) = sum - C;
        }
      } else {
        if (alpha(i) < 0) {
          alpha(i) = 0;
          alpha(j) = sum;
        }
      }
    }

    const double dai = alpha(i) - old_ai;
    const double daj = alpha(j) - old_aj;
    G.noalias() += Q.col(i) * dai + Q.col(j) * daj;

    if (options.on_iteration) options.on_iteration(iter, -0.5 * alpha.dot(G - Vector::Ones(n)));
  }

  sol.iterations = iter;
  sol.kkt_violation = std::max(0.0, gap);
  // f = 1/2 a'Qa - 1'a = 1/2 a'(G - 1); the dual objective is -f.
  sol.objective = -0.5 * alpha.dot(G - Vector::Ones(n));
  sol.bias = compute_bias(y, alpha, G, C);
  return sol;
}

Vector compute_q(const KernelBank& bank, Index t, const Vector& y, const Vector& alpha) {
  const Index n = bank.task_size(t);
  if (y.size() != n || alpha.size() != n) {
    throw InputError("compute_q: expected vectors of length " + std::to_string(n));
  }
  const Vector ay = alpha.cwiseProduct(y);
  Vector q(bank.num_kernels());
  for (Index m = 0; m < bank.num_kernels(); ++m) {
    q(m) = -0.5 * ay.dot(bank.gram(t, m) * ay);
  }
  return q;
}

Vector decision_values(const Matrix& cross_kernel, const Vector& y, const Vector& alpha,
                       double bias) {
  if (cross_kernel.rows() != y.size() || alpha.size() != y.size()) {
    throw InputError("decision_values: kernel block does not match the expansion length");
  }
  const Vector ay = alpha.cwiseProduct(y);
  return (cross_kernel.transpose() * ay).array() + bias;
}

}  // namespace mtmkl
