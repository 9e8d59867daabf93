#include "mtmkl/kernel_bank.hpp"

#include <sstream>

namespace mtmkl {

void KernelSpec::Validate() const {
  switch (kind) {
    case KernelKind::kLinear:
      return;
    case KernelKind::kPolynomial:
      if (degree < 1) throw InputError("polynomial kernel degree must be >= 1");
      return;
    case KernelKind::kGaussian:
      if (!(spread > 0.0) || !std::isfinite(spread)) {
        throw InputError("gaussian kernel spread must be > 0");
      }
      return;
  }
}

std::string KernelSpec::Describe() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind) {
    case KernelKind::kLinear:
      out << "linear";
      break;
    case KernelKind::kPolynomial:
      out << "polynomial(degree=" << degree << ", coef0=" << coef0 << ")";
      break;
    case KernelKind::kGaussian:
      out << "gaussian(" << (convention == GaussianConvention::kSigma ? "sigma=" : "gamma=")
          << spread << ")";
      break;
  }
  return out.str();
}

namespace {

Vector self_similarity(const KernelSpec& spec, const Matrix& X, double eps_diag,
                       const char* which) {
  Vector d(X.rows());
  for (Index i = 0; i < X.rows(); ++i) {
    d(i) = eval_kernel(spec, X.row(i), X.row(i));
    if (!(d(i) > eps_diag)) {
      std::ostringstream msg;
      msg << which << " sample " << i << " has self-similarity " << d(i) << " under "
          << spec.Describe() << "; cannot normalize";
      throw DegenerateSampleError(msg.str(), i);
    }
  }
  return d;
}

}  // namespace

Matrix normalized_gram(const KernelSpec& spec, const Matrix& X, double eps_diag) {
  spec.Validate();
  const Index n = X.rows();
  const Vector diag = self_similarity(spec, X, eps_diag, "training");
  const Vector inv_sqrt = diag.cwiseSqrt().cwiseInverse();
  Matrix K(n, n);
  for (Index j = 0; j < n; ++j) {
    K(j, j) = 1.0;
    for (Index i = j + 1; i < n; ++i) {
      const double value = eval_kernel(spec, X.row(i), X.row(j)) * inv_sqrt(i) * inv_sqrt(j);
      K(i, j) = value;
      K(j, i) = value;
    }
  }
  return K;
}

Matrix normalized_cross_gram(const KernelSpec& spec, const Matrix& A, const Matrix& B,
                             double eps_diag) {
  spec.Validate();
  if (A.cols() != B.cols()) {
    throw InputError("normalized_cross_gram: feature dimension mismatch (" +
                     std::to_string(A.cols()) + " vs " + std::to_string(B.cols()) + ")");
  }
  const Vector da = self_similarity(spec, A, eps_diag, "left").cwiseSqrt();
  const Vector db = self_similarity(spec, B, eps_diag, "right").cwiseSqrt();
  Matrix K(A.rows(), B.rows());
  for (Index j = 0; j < B.rows(); ++j) {
    for (Index i = 0; i < A.rows(); ++i) {
      K(i, j) = eval_kernel(spec, A.row(i), B.row(j)) / (da(i) * db(j));
    }
  }
  return K;
}

KernelBank::KernelBank(std::vector<KernelSpec> specs, std::vector<std::vector<GramMatrix>> grams)
    : specs_(std::move(specs)), grams_(std::move(grams)) {
  for (std::size_t t = 0; t < grams_.size(); ++t) {
    if (grams_[t].size() != specs_.size()) {
      throw InputError("KernelBank: task " + std::to_string(t) + " has " +
                       std::to_string(grams_[t].size()) + " Gram matrices, expected " +
                       std::to_string(specs_.size()));
    }
    for (std::size_t m = 0; m < specs_.size(); ++m) {
      const GramMatrix& g = grams_[t][m];
      if (g.task != static_cast<Index>(t) || g.kernel != static_cast<Index>(m)) {
        throw InputError("KernelBank: Gram matrix stored at the wrong (task, kernel) slot");
      }
      if (g.values.rows() != g.values.cols() ||
          g.values.rows() != grams_[t][0].values.rows()) {
        throw InputError("KernelBank: inconsistent Gram shapes for task " + std::to_string(t));
      }
    }
  }
}

Index KernelBank::task_size(Index t) const {
  if (t < 0 || t >= num_tasks()) throw InputError("KernelBank: task index out of range");
  return specs_.empty() ? 0 : grams_[t][0].values.rows();
}

const GramMatrix& KernelBank::entry(Index t, Index m) const {
  if (t < 0 || t >= num_tasks() || m < 0 || m >= num_kernels()) {
    throw InputError("KernelBank: (task, kernel) index out of range");
  }
  return grams_[t][m];
}

KernelBank build_bank(const std::vector<Matrix>& task_features,
                      const std::vector<KernelSpec>& specs, std::size_t threads) {
  if (specs.empty()) throw InputError("build_bank: empty kernel menu");
  for (const auto& s : specs) s.Validate();
  const std::size_t T = task_features.size();
  const std::size_t M = specs.size();
  for (std::size_t t = 0; t < T; ++t) {
    if (task_features[t].rows() < 2) {
      throw InputError("build_bank: task " + std::to_string(t) +
                       " has fewer than 2 training samples");
    }
  }

  std::vector<std::vector<GramMatrix>> grams(T, std::vector<GramMatrix>(M));
  parallel_for(T * M, threads, [&](std::size_t k) {
    const std::size_t t = k / M;
    const std::size_t m = k % M;
    GramMatrix& g = grams[t][m];
    g.task = static_cast<Index>(t);
    g.kernel = static_cast<Index>(m);
    try {
      g.values = normalized_gram(specs[m], task_features[t]);
    } catch (const DegenerateSampleError& e) {
      throw DegenerateSampleError("task " + std::to_string(t) + ": " + e.what(), e.sample());
    }
  });
  return KernelBank(specs, std::move(grams));
}

Matrix combine(const KernelBank& bank, Index t, const Eigen::Ref<const Vector>& theta) {
  if (theta.size() != bank.num_kernels()) {
    throw InputError("combine: theta has " + std::to_string(theta.size()) +
                     " components, bank has " + std::to_string(bank.num_kernels()) + " kernels");
  }
  if ((theta.array() < 0.0).any()) throw InputError("combine: negative kernel weight");
  const Index n = bank.task_size(t);
  Matrix K = Matrix::Zero(n, n);
  for (Index m = 0; m < bank.num_kernels(); ++m) {
    if (theta(m) != 0.0) K.noalias() += theta(m) * bank.gram(t, m);
  }
  return K;
}

}  // namespace mtmkl
