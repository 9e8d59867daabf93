#ifndef MTMKL_COMMON_HPP_
#define MTMKL_COMMON_HPP_

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mtmkl {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexList = std::vector<Index>;

//! Base class of every error raised by the library. `kind()` is a stable
//! machine-readable tag used by the CLI's structured error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

//! Shape mismatch, out-of-domain argument, malformed configuration.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input_error", what) {}
};

//! A sample whose self-similarity is (numerically) zero cannot be normalized.
class DegenerateSampleError : public Error {
 public:
  DegenerateSampleError(const std::string& what, Index sample)
      : Error("degenerate_sample", what), sample_(sample) {}
  Index sample() const noexcept { return sample_; }

 private:
  Index sample_;
};

//! A binary task whose training labels contain a single class.
class UnlearnableTaskError : public Error {
 public:
  explicit UnlearnableTaskError(const std::string& what) : Error("unlearnable_task", what) {}
};

//! Iterative solver hit its iteration cap.
class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what) : Error("convergence_error", what) {}
};

//! A model or iterate violates its feasibility contract.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract_error", what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("parse_error", what), line_(line) {}
  //! 1-based line number, 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

//! Requested split fractions cannot be honored by the class counts.
class SplitError : public Error {
 public:
  explicit SplitError(const std::string& what) : Error("split_error", what) {}
};

//! Multi-task problem construction failed (e.g. an empty class in a pair).
class ConstructionError : public Error {
 public:
  explicit ConstructionError(const std::string& what) : Error("construction_error", what) {}
};

//! Every point of a hyperparameter grid failed; the message lists each cause.
class GridError : public Error {
 public:
  explicit GridError(const std::string& what) : Error("grid_error", what) {}
};

//! Number of worker threads: MTMKL_THREADS if set and positive, otherwise the
//! hardware concurrency (at least 1).
std::size_t default_thread_count();

//! Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
//! visited exactly once; the first exception thrown is rethrown on the caller.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace mtmkl

#endif  // MTMKL_COMMON_HPP_
