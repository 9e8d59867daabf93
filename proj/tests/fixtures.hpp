// Synthetic data shared by the unit and acceptance suites.
#ifndef MTMKL_TESTS_FIXTURES_HPP_
#define MTMKL_TESTS_FIXTURES_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mtmkl/dataset.hpp"
#include "mtmkl/kernel_bank.hpp"

namespace fixture {

using mtmkl::Index;
using mtmkl::Matrix;
using mtmkl::TaskDataset;
using mtmkl::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Index n, double lo = -1.0, double hi = 1.0) {
  return random_matrix(rng, n, 1, lo, hi).col(0);
}

//! Two overlapping Gaussian clouds in d dimensions, labels alternate so both
//! classes are present.
inline TaskDataset noisy_task(std::mt19937_64& rng, Index n, Index d, const std::string& name,
                              double shift = 0.7) {
  std::normal_distribution<double> g(0.0, 1.0);
  TaskDataset ds;
  ds.name = name;
  ds.X.resize(n, d);
  ds.y.resize(n);
  Vector direction = Vector::NullaryExpr(d, [&](Index) { return g(rng); });
  direction.normalize();
  for (Index i = 0; i < n; ++i) {
    const double label = (i % 2 == 0) ? 1.0 : -1.0;
    ds.y(i) = label;
    for (Index j = 0; j < d; ++j) ds.X(i, j) = g(rng) + 0.5 * label * shift * direction(j) + 1.0;
  }
  return mtmkl::with_all_training(ds);
}

inline std::vector<mtmkl::KernelSpec> kernel_menu(Index M) {
  std::vector<mtmkl::KernelSpec> all = {
      mtmkl::KernelSpec::Linear(),        mtmkl::KernelSpec::Gaussian(0.5),
      mtmkl::KernelSpec::Polynomial(2),   mtmkl::KernelSpec::Gaussian(2.0),
      mtmkl::KernelSpec::Gaussian(1.0),   mtmkl::KernelSpec::Gaussian(4.0),
      mtmkl::KernelSpec::Polynomial(3),   mtmkl::KernelSpec::Gaussian(0.25)};
  all.resize(static_cast<std::size_t>(M));
  return all;
}

// Six tasks in two planted groups that want different Gaussian bandwidths.
// Fine group: XOR inside a 0.2-wide square, only a narrow kernel resolves it.
// Coarse group: two blobs 3 apart with 8% label flips; a narrow kernel
// memorizes the flips, a wide one ignores them.
struct PlantedGroups {
  std::vector<TaskDataset> tasks;
  std::vector<int> group;
  std::vector<mtmkl::KernelSpec> kernels;
};

inline PlantedGroups planted_groups(std::uint64_t seed, Index n = 100, double train_frac = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  PlantedGroups out;
  out.kernels = {mtmkl::KernelSpec::Gaussian(0.02), mtmkl::KernelSpec::Gaussian(2.0)};
  for (int t = 0; t < 6; ++t) {
    const bool fine = t < 3;
    TaskDataset ds;
    ds.name = (fine ? "fine" : "coarse") + std::to_string(t % 3);
    ds.X.resize(n, 2);
    ds.y.resize(n);
    const double angle = 2.0 * M_PI * u(rng);
    for (Index i = 0; i < n; ++i) {
      double label = (i % 2 == 0) ? 1.0 : -1.0;
      if (fine) {
        int cx, cy;
        do {
          cx = static_cast<int>(rng() % 2);
          cy = static_cast<int>(rng() % 2);
        } while (((cx + cy) % 2 == 1 ? 1.0 : -1.0) != label);
        ds.X(i, 0) = 0.1 * (cx + 0.5 + 0.5 * (u(rng) - 0.5));
        ds.X(i, 1) = 0.1 * (cy + 0.5 + 0.5 * (u(rng) - 0.5));
      } else {
        ds.X(i, 0) = 5.0 + label * 1.5 * std::cos(angle) + 0.3 * g(rng);
        ds.X(i, 1) = 5.0 + label * 1.5 * std::sin(angle) + 0.3 * g(rng);
        if (u(rng) < 0.08) label = -label;
      }
      ds.y(i) = label;
    }
    out.tasks.push_back(mtmkl::stratified_split(ds, {train_frac, seed * 31 + static_cast<std::uint64_t>(t), false}));
    out.group.push_back(fine ? 0 : 1);
  }
  return out;
}

}  // namespace fixture

#endif  // MTMKL_TESTS_FIXTURES_HPP_
