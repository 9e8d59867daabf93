#include <doctest.h>

#include "fixtures.hpp"
#include "mtmkl/svm_dual.hpp"
#include "oracles.hpp"

using namespace mtmkl;

namespace {

// Random normalized Gram with both classes present.
void random_instance(std::mt19937_64& rng, Index n, Matrix& K, Vector& y) {
  const Matrix X = fixture::random_matrix(rng, n, 3);
  const std::vector<KernelSpec> menu = fixture::kernel_menu(5);
  K = normalized_gram(menu[rng() % menu.size()], X);
  y.resize(n);
  for (Index i = 0; i < n; ++i) y(i) = (rng() % 2) ? 1.0 : -1.0;
  y(0) = 1.0;
  y(1) = -1.0;
}

}  // namespace

TEST_CASE("two-sample closed form") {
  for (double k : {-0.5, 0.0, 0.3, 0.8}) {
    Matrix K(2, 2);
    K << 1, k, k, 1;
    Vector y(2);
    y << 1, -1;
    const DualSolution sol = solve_dual(K, y, 1e6, {1e-10});
    CHECK(sol.alpha(0) == doctest::Approx(1.0 / (1.0 - k)).epsilon(1e-8));
    CHECK(sol.alpha(1) == doctest::Approx(1.0 / (1.0 - k)).epsilon(1e-8));
    CHECK(std::abs(sol.bias) <= 1e-8);
  }
}

TEST_CASE("C = 0 collapses the box") {
  std::mt19937_64 rng(1);
  Matrix K;
  Vector y;
  random_instance(rng, 5, K, y);
  const DualSolution sol = solve_dual(K, y, 0.0);
  CHECK(sol.alpha.isZero(0.0));
  CHECK(sol.objective == 0.0);
}

TEST_CASE("matches the active-set oracle and satisfies KKT") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 5);
    Matrix K;
    Vector y;
    random_instance(rng, n, K, y);
    const double C = std::pow(10.0, -1.0 + 3.0 * std::uniform_real_distribution<double>()(rng));
    const DualSolution sol = solve_dual(K, y, C, {1e-8});
    const double reference = oracle::svm_dual_by_active_sets(K, y, C);
    CHECK(sol.objective == doctest::Approx(reference).epsilon(1e-6).scale(1.0));
    CHECK(sol.kkt_violation <= 1e-8);
    CHECK(sol.alpha.minCoeff() >= -1e-10);
    CHECK(sol.alpha.maxCoeff() <= C + 1e-10);
    CHECK(std::abs(sol.alpha.dot(y)) <= 1e-8);
    CHECK(kkt_violation(K, y, sol.alpha, C) == doctest::Approx(sol.kkt_violation));
    CHECK(dual_objective(K, y, sol.alpha) == doctest::Approx(sol.objective));
  }
}

TEST_CASE("dual objective never decreases during SMO") {
  std::mt19937_64 rng(3);
  Matrix K;
  Vector y;
  random_instance(rng, 30, K, y);
  double last = 0.0;
  bool monotone = true;
  SvmOptions opts;
  opts.tol = 1e-6;
  opts.on_iteration = [&](long, double obj) {
    monotone = monotone && obj >= last - 1e-12;
    last = obj;
  };
  solve_dual(K, y, 2.0, opts);
  CHECK(monotone);
}

TEST_CASE("larger C never lowers the optimum") {
  std::mt19937_64 rng(4);
  Matrix K;
  Vector y;
  random_instance(rng, 12, K, y);
  double previous = 0.0;
  for (double C : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const double obj = solve_dual(K, y, C, {1e-9}).objective;
    CHECK(obj >= previous - 1e-9);
    previous = obj;
  }
}

TEST_CASE("bias without free support vectors is the interval midpoint") {
  // Identical samples with opposite labels: every alpha ends at C.
  Matrix K = Matrix::Ones(2, 2);
  Vector y(2);
  y << 1, -1;
  const DualSolution sol = solve_dual(K, y, 0.5);
  CHECK(sol.alpha(0) == doctest::Approx(0.5));
  CHECK(sol.alpha(1) == doctest::Approx(0.5));
  CHECK(sol.bias == doctest::Approx(0.0));
}

TEST_CASE("errors") {
  Matrix K = Matrix::Identity(3, 3);
  Vector same = Vector::Ones(3);
  CHECK_THROWS_AS(solve_dual(K, same, 1.0), UnlearnableTaskError);
  Vector y(3);
  y << 1, -1, 1;
  Matrix asym = K;
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(solve_dual(asym, y, 1.0), InputError);
  Vector bad(3);
  bad << 1, -1, 2;
  CHECK_THROWS_AS(solve_dual(K, bad, 1.0), InputError);
  CHECK_THROWS_AS(solve_dual(K, y, -1.0), InputError);

  std::mt19937_64 rng(5);
  Matrix K2;
  Vector y2;
  random_instance(rng, 20, K2, y2);
  SvmOptions capped;
  capped.tol = 1e-12;
  capped.max_iterations = 2;
  try {
    solve_dual(K2, y2, 10.0, capped);
    FAIL("expected a convergence error");
  } catch (const SvmConvergenceError& e) {
    CHECK(e.best().alpha.size() == 20);
    CHECK(e.best().iterations == 2);
  }
}

TEST_CASE("compute_q") {
  Matrix X(2, 2);
  X << 1, 0, 0, 1;
  const KernelBank identity = build_bank(std::vector<Matrix>{X}, {KernelSpec::Linear()});
  Vector y(2);
  y << 1, 1;
  CHECK(compute_q(identity, 0, y, Vector::Zero(2))(0) == 0.0);
  CHECK(compute_q(identity, 0, y, Vector::Ones(2))(0) == doctest::Approx(-1.0));

  std::mt19937_64 rng(6);
  const Matrix Z = fixture::random_matrix(rng, 6, 2);
  const KernelBank bank = build_bank(std::vector<Matrix>{Z}, fixture::kernel_menu(3));
  Vector labels(6);
  labels << 1, -1, 1, 1, -1, -1;
  const Vector alpha = fixture::random_vector(rng, 6, 0.0, 1.0);
  const Vector q = compute_q(bank, 0, labels, alpha);
  for (Index m = 0; m < 3; ++m) {
    double direct = 0.0;
    for (Index i = 0; i < 6; ++i) {
      for (Index j = 0; j < 6; ++j) {
        direct += alpha(i) * labels(i) * bank.gram(0, m)(i, j) * alpha(j) * labels(j);
      }
    }
    CHECK(q(m) == doctest::Approx(-0.5 * direct).epsilon(1e-12));
    CHECK(q(m) <= 1e-12);
  }
}

TEST_CASE("decision values") {
  std::mt19937_64 rng(7);
  const Matrix X = fixture::random_matrix(rng, 4, 2);
  Vector y(4);
  y << 1, -1, 1, -1;
  const KernelSpec spec = KernelSpec::Gaussian(0.5);
  const Matrix K = normalized_gram(spec, X);
  const DualSolution sol = solve_dual(K, y, 10.0, {1e-10});

  // Independent expansion, written out term by term.
  const Vector f = decision_values(K, y, sol.alpha, sol.bias);
  for (Index i = 0; i < 4; ++i) {
    double expansion = sol.bias;
    for (Index j = 0; j < 4; ++j) {
      const Vector xi = X.row(i).transpose(), xj = X.row(j).transpose();
      expansion += sol.alpha(j) * y(j) * std::exp(-(xi - xj).squaredNorm() / 0.5);
    }
    CHECK(f(i) == doctest::Approx(expansion).epsilon(1e-12));
    if (sol.alpha(i) > 1e-8 && sol.alpha(i) < 10.0 - 1e-8) CHECK(f(i) == doctest::Approx(y(i)).epsilon(1e-6));
  }
  const Vector zero = decision_values(K, y, Vector::Zero(4), 0.0);
  CHECK(zero.isZero(0.0));
  CHECK(predicted_label(0.0) == 1.0);
  CHECK(predicted_label(-1e-300) == -1.0);
}
