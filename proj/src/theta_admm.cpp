#include "mtmkl/theta_admm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace mtmkl {

std::vector<PairIndex> enumerate_pairs(Index num_tasks) {
  std::vector<PairIndex> pairs;
  if (num_tasks > 1) pairs.reserve(static_cast<std::size_t>(num_tasks * (num_tasks - 1) / 2));
  Index i = 0;
  for (Index t = 0; t < num_tasks; ++t) {
    for (Index s = t + 1; s < num_tasks; ++s) pairs.push_back({i++, t, s});
  }
  return pairs;
}

namespace {

// Projection of a nonnegative vector with mass > 1 onto the unit simplex.
Vector project_simplex_nonneg(const Vector& x) {
  Vector sorted = x;
  std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<double>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (Index r = 0; r < sorted.size(); ++r) {
    cumulative += sorted(r);
    const double candidate = (cumulative - 1.0) / static_cast<double>(r + 1);
    if (sorted(r) - candidate > 0.0) tau = candidate;
  }
  return (x.array() - tau).cwiseMax(0.0);
}

}  // namespace

Vector project_box_l1(const Eigen::Ref<const Vector>& p) {
  Vector clipped = p.cwiseMax(0.0);
  if (clipped.sum() <= 1.0) return clipped;
  return project_simplex_nonneg(clipped);
}

Vector project_l1_ball(const Eigen::Ref<const Vector>& p) {
  if (p.lpNorm<1>() <= 1.0) return p;
  const Vector magnitude = project_simplex_nonneg(p.cwiseAbs());
  Vector out(p.size());
  for (Index k = 0; k < p.size(); ++k) out(k) = p(k) < 0 ? -magnitude(k) : magnitude(k);
  return out;
}

Vector project_dykstra(const Eigen::Ref<const Vector>& p, long max_iterations, double tol) {
  Vector x = p;
  Vector corr_orthant = Vector::Zero(p.size());
  Vector corr_ball = Vector::Zero(p.size());
  for (long k = 0; k < max_iterations; ++k) {
    const Vector y = project_orthant(x + corr_orthant);
    corr_orthant = x + corr_orthant - y;
    const Vector x_next = project_l1_ball(y + corr_ball);
    corr_ball = y + corr_ball - x_next;
    const double change = (x_next - x).norm();
    x = x_next;
    if (change <= tol && (x - y).norm() <= tol) break;
  }
  return x;
}

double fusion_penalty(const ThetaMatrix& theta) {
  double total = 0.0;
  for (Index t = 0; t < theta.rows(); ++t) {
    for (Index s = t + 1; s < theta.rows(); ++s) total += (theta.row(t) - theta.row(s)).norm();
  }
  return total;
}

double theta_objective(const ThetaMatrix& theta, const Matrix& q, double lambda) {
  if (theta.rows() != q.rows() || theta.cols() != q.cols()) {
    throw InputError("theta_objective: theta and q shapes differ");
  }
  return lambda * fusion_penalty(theta) + theta.cwiseProduct(q).sum();
}

bool ResidualNorms::satisfied() const {
  for (std::size_t k = 0; k < 3; ++k) {
    if (primal[k] > eps_primal[k] || dual[k] > eps_dual[k]) return false;
  }
  return true;
}

AdmmState AdmmState::Initialize(const ThetaMatrix& theta0, double rho) {
  if (!(rho > 0.0)) throw InputError("ADMM penalty rho must be > 0");
  AdmmState state;
  state.num_tasks = theta0.rows();
  state.num_kernels = theta0.cols();
  state.rho = rho;
  const auto pairs = enumerate_pairs(state.num_tasks);
  const Index N = static_cast<Index>(pairs.size());
  const Index M = state.num_kernels;
  state.s_first.resize(N, M);
  state.s_second.resize(N, M);
  for (const auto& pair : pairs) {
    state.s_first.row(pair.i) = theta0.row(pair.t);
    state.s_second.row(pair.i) = theta0.row(pair.s);
  }
  state.u_first = Matrix::Zero(N, M);
  state.u_second = Matrix::Zero(N, M);
  state.theta = theta0;
  state.z = theta0;
  state.v = Matrix::Zero(state.num_tasks, M);
  state.y = theta0;
  state.beta = Matrix::Zero(state.num_tasks, M);
  return state;
}

void AdmmState::CheckShape(Index T, Index M) const {
  const Index N = T * (T - 1) / 2;
  const bool ok = num_tasks == T && num_kernels == M && s_first.rows() == N &&
                  s_first.cols() == M && s_second.rows() == N && s_second.cols() == M &&
                  u_first.rows() == N && u_first.cols() == M && u_second.rows() == N &&
                  u_second.cols() == M && theta.rows() == T && theta.cols() == M &&
                  z.rows() == T && z.cols() == M && v.rows() == T && v.cols() == M &&
                  y.rows() == T && y.cols() == M && beta.rows() == T && beta.cols() == M;
  if (!ok) throw InputError("AdmmState: dimensions inconsistent with (T, M)");
  if (!(rho > 0.0)) throw InputError("AdmmState: rho must be > 0");
}

void s_update(AdmmState& state, double lambda) {
  const double kappa = 2.0 * lambda / state.rho;
  const auto pairs = enumerate_pairs(state.num_tasks);
  for (const auto& pair : pairs) {
    const Vector p_first = state.theta.row(pair.t) - state.u_first.row(pair.i);
    const Vector p_second = state.theta.row(pair.s) - state.u_second.row(pair.i);
    const Vector mean = 0.5 * (p_first + p_second);
    const Vector half_diff = 0.5 * shrink(p_first - p_second, kappa);
    state.s_first.row(pair.i) = mean + half_diff;
    state.s_second.row(pair.i) = mean - half_diff;
  }
}

void theta_update(AdmmState& state, const Matrix& q, ThetaDivisor divisor) {
  const Index T = state.num_tasks;
  if (q.rows() != T || q.cols() != state.num_kernels) {
    throw InputError("theta_update: q must be T x M");
  }
  double scale = static_cast<double>(T);
  if (divisor == ThetaDivisor::kPrinted) {
    if (T < 2) throw InputError("theta_update: the 1/(T-1) divisor needs at least two tasks");
    scale = static_cast<double>(T - 1);
  }
  Matrix acc = state.z + state.v - q / state.rho;
  for (const auto& pair : enumerate_pairs(T)) {
    acc.row(pair.t) += state.s_first.row(pair.i) + state.u_first.row(pair.i);
    acc.row(pair.s) += state.s_second.row(pair.i) + state.u_second.row(pair.i);
  }
  state.theta = acc / scale;
}

void z_update(AdmmState& state, ProjectionMode mode) {
  for (Index t = 0; t < state.num_tasks; ++t) {
    const Vector target = state.theta.row(t) - state.v.row(t);
    if (mode == ProjectionMode::kExact) {
      state.z.row(t) = project_box_l1(target);
    } else {
      const Vector y = project_orthant(target - state.beta.row(t).transpose());
      const Vector z = project_l1_ball(y + state.beta.row(t).transpose());
      state.beta.row(t) += (y - z).transpose();
      state.y.row(t) = y;
      state.z.row(t) = z;
    }
  }
  if (mode == ProjectionMode::kExact) state.y = state.z;
}

void dual_updates(AdmmState& state) {
  for (const auto& pair : enumerate_pairs(state.num_tasks)) {
    state.u_first.row(pair.i) += state.s_first.row(pair.i) - state.theta.row(pair.t);
    state.u_second.row(pair.i) += state.s_second.row(pair.i) - state.theta.row(pair.s);
  }
  state.v += state.z - state.theta;
}

ThetaMatrix solve_theta_independent(const Matrix& q) {
  ThetaMatrix theta = ThetaMatrix::Zero(q.rows(), q.cols());
  for (Index t = 0; t < q.rows(); ++t) {
    Index best = 0;
    for (Index m = 1; m < q.cols(); ++m) {
      if (q(t, m) < q(t, best)) best = m;
    }
    // The zero vertex only wins when every coordinate is strictly positive.
    if (q.cols() > 0 && q(t, best) <= 0.0) theta(t, best) = 1.0;
  }
  return theta;
}

void write_trace_header(std::ostream& out) {
  out << "iteration,objective,rho,primal_1,primal_2,primal_3,dual_1,dual_2,dual_3\n";
}

namespace {

double stacked_pair_norm(const AdmmState& state) {
  double sq = 0.0;
  for (const auto& pair : enumerate_pairs(state.num_tasks)) {
    sq += state.theta.row(pair.t).squaredNorm() + state.theta.row(pair.s).squaredNorm();
  }
  return std::sqrt(sq);
}

ThetaMatrix project_rows(const ThetaMatrix& theta) {
  ThetaMatrix out(theta.rows(), theta.cols());
  for (Index t = 0; t < theta.rows(); ++t) out.row(t) = project_box_l1(theta.row(t).transpose());
  return out;
}

ResidualNorms measure(const AdmmState& state, const ThetaMatrix& theta_prev, const Matrix& z_prev,
                      const Matrix& y_prev, const StoppingTolerances& tol, bool dykstra) {
  const double T = static_cast<double>(state.num_tasks);
  const double M = static_cast<double>(state.num_kernels);
  const double N = static_cast<double>(state.num_pairs());
  ResidualNorms r;

  double p1 = 0.0;
  for (const auto& pair : enumerate_pairs(state.num_tasks)) {
    p1 += (state.s_first.row(pair.i) - state.theta.row(pair.t)).squaredNorm();
    p1 += (state.s_second.row(pair.i) - state.theta.row(pair.s)).squaredNorm();
  }
  r.primal[0] = std::sqrt(p1);
  r.primal[1] = (state.z - state.theta).norm();
  r.primal[2] = dykstra ? (state.y - state.z).norm() : 0.0;
  r.dual[0] = state.rho * (state.theta - theta_prev).norm();
  r.dual[1] = state.rho * (state.z - z_prev).norm();
  r.dual[2] = dykstra ? state.rho * (state.y - y_prev).norm() : 0.0;

  const double s_norm =
      std::sqrt(state.s_first.squaredNorm() + state.s_second.squaredNorm());
  const double u_norm =
      std::sqrt(state.u_first.squaredNorm() + state.u_second.squaredNorm());
  const double root_pair = std::sqrt(2.0 * N * M);
  const double root_task = std::sqrt(T * M);
  r.eps_primal[0] = root_pair * tol.eps_abs + tol.eps_rel * std::max(s_norm, stacked_pair_norm(state));
  r.eps_primal[1] = root_task * tol.eps_abs + tol.eps_rel * std::max(state.z.norm(), state.theta.norm());
  r.eps_primal[2] = root_task * tol.eps_abs + tol.eps_rel * std::max(state.y.norm(), state.z.norm());
  r.eps_dual[0] = root_task * tol.eps_abs + tol.eps_rel * state.rho * u_norm;
  r.eps_dual[1] = root_task * tol.eps_abs + tol.eps_rel * state.rho * state.v.norm();
  r.eps_dual[2] = root_task * tol.eps_abs + tol.eps_rel * state.beta.norm();
  return r;
}

void rescale_rho(AdmmState& state, const ResidualNorms& r) {
  constexpr double kRatio = 10.0;
  constexpr double kFactor = 2.0;
  const double primal = std::hypot(r.primal[0], r.primal[1]);
  const double dual = std::hypot(r.dual[0], r.dual[1]);
  double factor = 1.0;
  if (primal > kRatio * dual) {
    factor = kFactor;
  } else if (dual > kRatio * primal) {
    factor = 1.0 / kFactor;
  }
  if (factor == 1.0) return;
  state.rho *= factor;
  state.u_first /= factor;
  state.u_second /= factor;
  state.v /= factor;
}

// q plus the clipped pair multipliers: the linear cost each row sees in the
// Lagrangian.
Matrix reduced_costs(const AdmmState& state, const Matrix& q, double lambda) {
  Matrix c = q;
  for (const auto& pair : enumerate_pairs(state.num_tasks)) {
    Vector w = 0.5 * state.rho * (state.u_second.row(pair.i) - state.u_first.row(pair.i)).transpose();
    const double norm = w.norm();
    if (norm > lambda) w *= lambda / norm;
    c.row(pair.t) += w.transpose();
    c.row(pair.s) -= w.transpose();
  }
  return c;
}

ThetaMatrix snap_to_vertices(const ThetaMatrix& theta, const Matrix& cost) {
  ThetaMatrix out = theta;
  for (Index t = 0; t < cost.rows(); ++t) {
    Index arg = 0;
    const double lowest = cost.row(t).minCoeff(&arg);
    const double slack = 1e-9 * (1.0 + cost.row(t).cwiseAbs().maxCoeff());
    const auto ties = (cost.row(t).array() <= lowest + slack).count();
    if (lowest > slack) {
      out.row(t).setZero();
    } else if (ties == 1 && lowest < -slack) {
      out.row(t).setZero();
      out(t, arg) = 1.0;
    }
  }
  return out;
}

// Union of tasks whose rows lie within `radius`, each group replaced by its
// projected mean.
ThetaMatrix merge_close_rows(const ThetaMatrix& theta, double radius) {
  const Index T = theta.rows();
  std::vector<Index> root(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) root[t] = t;
  std::function<Index(Index)> find = [&](Index x) { return root[x] == x ? x : root[x] = find(root[x]); };
  for (Index t = 0; t < T; ++t) {
    for (Index s = t + 1; s < T; ++s) {
      if ((theta.row(t) - theta.row(s)).norm() <= radius) root[find(s)] = find(t);
    }
  }
  ThetaMatrix out(T, theta.cols());
  for (Index t = 0; t < T; ++t) {
    Vector sum = Vector::Zero(theta.cols());
    double count = 0.0;
    for (Index s = 0; s < T; ++s) {
      if (find(s) == find(t)) {
        sum += theta.row(s).transpose();
        count += 1.0;
      }
    }
    out.row(t) = project_box_l1(sum / count).transpose();
  }
  return out;
}

}  // namespace

double theta_dual_bound(const AdmmState& state, const Matrix& q, double lambda) {
  state.CheckShape(q.rows(), q.cols());
  const Matrix c = reduced_costs(state, q, lambda);
  double bound = 0.0;
  for (Index t = 0; t < c.rows(); ++t) bound += std::min(0.0, c.row(t).minCoeff());
  return bound;
}

ThetaMatrix polish_theta(const AdmmState& state, const Matrix& q, double lambda) {
  state.CheckShape(q.rows(), q.cols());
  const ThetaMatrix base = project_rows(state.z);
  const ThetaMatrix snapped = snap_to_vertices(base, reduced_costs(state, q, lambda));
  ThetaMatrix best = base;
  double best_value = theta_objective(base, q, lambda);
  for (const ThetaMatrix* start : {&base, &snapped}) {
    for (double radius : {0.0, 1e-3, 1e-2}) {
      const ThetaMatrix candidate = radius > 0.0 ? merge_close_rows(*start, radius) : *start;
      const double value = theta_objective(candidate, q, lambda);
      if (value < best_value) {
        best_value = value;
        best = candidate;
      }
    }
  }
  return best;
}

ThetaSolution solve_theta(const Matrix& q, double lambda, const AdmmOptions& options,
                          const AdmmState* warm) {
  const Index T = q.rows();
  const Index M = q.cols();
  if (T < 1 || M < 1) throw InputError("solve_theta: q must be a non-empty T x M matrix");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InputError("solve_theta: lambda must be finite and >= 0");
  }
  if (!(options.rho > 0.0)) throw InputError("solve_theta: rho must be > 0");

  ThetaSolution out;
  if (lambda == 0.0 || T == 1) {
    out.theta = solve_theta_independent(q);
    out.state = AdmmState::Initialize(out.theta, options.rho);
    out.objective = theta_objective(out.theta, q, lambda);
    out.lower_bound = out.objective;
    return out;
  }

  AdmmState state;
  if (warm != nullptr) {
    warm->CheckShape(T, M);
    state = *warm;
    state.rho = options.rho;
    state.residuals.clear();
    state.iterations = 0;
  } else {
    state = AdmmState::Initialize(ThetaMatrix::Constant(T, M, 1.0 / static_cast<double>(M)),
                                  options.rho);
  }

  const bool dykstra = options.projection == ProjectionMode::kDykstra;
  const StoppingTolerances& tol = options.tolerances;
  bool converged = false;
  bool residuals_met = false;
  for (long k = 0; k < tol.max_iterations; ++k) {
    const ThetaMatrix theta_prev = state.theta;
    const Matrix z_prev = state.z;
    const Matrix y_prev = state.y;

    s_update(state, lambda);
    theta_update(state, q, options.divisor);
    z_update(state, options.projection);
    dual_updates(state);
    ++state.iterations;

    const ResidualNorms r = measure(state, theta_prev, z_prev, y_prev, tol, dykstra);
    state.residuals.push_back(r);
    if (options.trace != nullptr) {
      std::ostream& os = *options.trace;
      const auto old_precision = os.precision(17);
      os << state.iterations << ',' << theta_objective(project_rows(state.theta), q, lambda)
         << ',' << state.rho;
      for (double value : r.primal) os << ',' << value;
      for (double value : r.dual) os << ',' << value;
      os << '\n';
      os.precision(old_precision);
    }
    residuals_met = r.satisfied();
    if (residuals_met) {
      if (tol.gap_rel <= 0.0) {
        converged = true;
        break;
      }
      const ThetaMatrix candidate = polish_theta(state, q, lambda);
      const double value = theta_objective(candidate, q, lambda);
      const double bound = theta_dual_bound(state, q, lambda);
      if (value - bound <= tol.gap_rel * std::max(std::abs(value), 1e-12)) {
        converged = true;
        break;
      }
    }
    if (options.adaptive_rho) rescale_rho(state, r);
  }

  // The gap check only delays stopping: at the cap, meeting the residual
  // tolerances still counts as convergence.
  converged = converged || residuals_met;

  // z is the projected iterate; in Dykstra mode it may still sit outside the
  // orthant before convergence, hence the row projection inside the polish.
  out.theta = polish_theta(state, q, lambda);
  out.objective = theta_objective(out.theta, q, lambda);
  out.lower_bound = theta_dual_bound(state, q, lambda);
  out.converged = converged;
  out.state = std::move(state);
  if (!converged) {
    const ResidualNorms& last = out.state.residuals.back();
    std::ostringstream msg;
    msg.precision(6);
    msg << "solve_theta: no convergence within " << tol.max_iterations
        << " iterations (primal residuals " << last.primal[0] << ", " << last.primal[1] << ", "
        << last.primal[2] << "; dual residuals " << last.dual[0] << ", " << last.dual[1] << ", "
        << last.dual[2] << ")";
    throw AdmmConvergenceError(msg.str(), std::move(out));
  }
  return out;
}

}  // namespace mtmkl
