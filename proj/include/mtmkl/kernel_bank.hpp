#ifndef MTMKL_KERNEL_BANK_HPP_
#define MTMKL_KERNEL_BANK_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "mtmkl/common.hpp"

namespace mtmkl {

enum class KernelKind { kLinear, kPolynomial, kGaussian };

//! How the `spread` of a Gaussian kernel enters the exponent.
//!   kSigma: exp(-|x-y|^2 / (2 spread^2))
//!   kGamma: exp(-spread |x-y|^2)
enum class GaussianConvention { kSigma, kGamma };

//! One base kernel k_m of the menu. Kernel ids are positions in the menu.
struct KernelSpec {
  KernelKind kind = KernelKind::kLinear;
  int degree = 2;       //!< polynomial only
  double coef0 = 1.0;   //!< polynomial only
  double spread = 1.0;  //!< gaussian only
  GaussianConvention convention = GaussianConvention::kSigma;

  static KernelSpec Linear() { return {}; }
  static KernelSpec Polynomial(int degree, double coef0 = 1.0) {
    KernelSpec s;
    s.kind = KernelKind::kPolynomial;
    s.degree = degree;
    s.coef0 = coef0;
    return s;
  }
  static KernelSpec Gaussian(double spread,
                             GaussianConvention convention = GaussianConvention::kSigma) {
    KernelSpec s;
    s.kind = KernelKind::kGaussian;
    s.spread = spread;
    s.convention = convention;
    return s;
  }

  //! Throws InputError on a non-positive spread or a degree below 1.
  void Validate() const;
  std::string Describe() const;

  bool operator==(const KernelSpec&) const = default;
};

//! Raw (unnormalized) kernel value.
template <typename DerivedX, typename DerivedY>
double eval_kernel(const KernelSpec& spec, const Eigen::MatrixBase<DerivedX>& x,
                   const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size() || x.size() == 0) {
    throw InputError("eval_kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  }
  switch (spec.kind) {
    case KernelKind::kLinear:
      return x.dot(y);
    case KernelKind::kPolynomial:
      return std::pow(x.dot(y) + spec.coef0, spec.degree);
    case KernelKind::kGaussian: {
      const double sq = (x - y).squaredNorm();
      if (spec.convention == GaussianConvention::kGamma) return std::exp(-spec.spread * sq);
      return std::exp(-sq / (2.0 * spec.spread * spec.spread));
    }
  }
  return 0.0;
}

inline constexpr double kDiagonalEpsilon = 1e-12;

//! Wraps a raw kernel into k(x,y) = raw(x,y) / sqrt(raw(x,x) raw(y,y)).
//! The returned callable throws DegenerateSampleError (sample 0 = first
//! argument, 1 = second) when a self-similarity is <= eps_diag.
template <typename RawKernel>
auto normalize_kernel(RawKernel raw, double eps_diag = kDiagonalEpsilon) {
  return [raw = std::move(raw), eps_diag](const auto& x, const auto& y) -> double {
    const double kxx = raw(x, x);
    if (!(kxx > eps_diag)) {
      throw DegenerateSampleError("normalize_kernel: first sample has self-similarity " +
                                      std::to_string(kxx),
                                  0);
    }
    const double kyy = raw(y, y);
    if (!(kyy > eps_diag)) {
      throw DegenerateSampleError("normalize_kernel: second sample has self-similarity " +
                                      std::to_string(kyy),
                                  1);
    }
    return raw(x, y) / std::sqrt(kxx * kyy);
  };
}

//! Normalized Gram matrix over the rows of X. The diagonal is set to exactly 1.
Matrix normalized_gram(const KernelSpec& spec, const Matrix& X,
                       double eps_diag = kDiagonalEpsilon);

//! Normalized cross-kernel: entry (i, j) = k(A.row(i), B.row(j)).
Matrix normalized_cross_gram(const KernelSpec& spec, const Matrix& A, const Matrix& B,
                             double eps_diag = kDiagonalEpsilon);

struct GramMatrix {
  Index task = 0;
  Index kernel = 0;
  Matrix values;
};

//! Immutable T x M table of normalized Gram matrices K_t^m over each task's
//! training samples.
class KernelBank {
 public:
  KernelBank() = default;
  KernelBank(std::vector<KernelSpec> specs, std::vector<std::vector<GramMatrix>> grams);

  Index num_tasks() const { return static_cast<Index>(grams_.size()); }
  Index num_kernels() const { return static_cast<Index>(specs_.size()); }
  Index task_size(Index t) const;

  const std::vector<KernelSpec>& specs() const { return specs_; }
  const GramMatrix& entry(Index t, Index m) const;
  const Matrix& gram(Index t, Index m) const { return entry(t, m).values; }

 private:
  std::vector<KernelSpec> specs_;
  std::vector<std::vector<GramMatrix>> grams_;
};

//! Builds the bank from each task's training feature matrix (rows = samples).
//! Each (t, m) Gram is computed once; pairs are distributed over `threads`.
KernelBank build_bank(const std::vector<Matrix>& task_features,
                      const std::vector<KernelSpec>& specs, std::size_t threads = 1);

//! sum_m theta(m) * K_t^m. Throws InputError on a negative or mis-sized theta.
Matrix combine(const KernelBank& bank, Index t, const Eigen::Ref<const Vector>& theta);

}  // namespace mtmkl

#endif  // MTMKL_KERNEL_BANK_HPP_
