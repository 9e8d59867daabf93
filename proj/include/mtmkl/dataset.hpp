#ifndef MTMKL_DATASET_HPP_
#define MTMKL_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtmkl/common.hpp"
#include "mtmkl/kernel_bank.hpp"

namespace mtmkl {

struct Split {
  IndexList train;
  IndexList validation;
  IndexList test;
};

//! One binary task: samples as rows of X, labels in {-1, +1}.
struct TaskDataset {
  std::string name;
  Matrix X;
  Vector y;
  Split split;

  Index size() const { return y.size(); }
  Matrix features(const IndexList& rows) const;
  Vector labels(const IndexList& rows) const;
  Matrix train_features() const { return features(split.train); }
  Vector train_labels() const { return labels(split.train); }

  //! Throws InputError when labels are not +-1, the split is not a disjoint
  //! cover of 0..n-1, or the train split lacks one of the classes.
  void Validate() const;
};

//! Marks every sample as training data.
TaskDataset with_all_training(TaskDataset ds);

//! Raw labelled samples; labels may be multiclass.
struct LabeledData {
  Matrix X;
  Vector labels;
};

//! Parses "label idx:val idx:val ..." lines (1-based, strictly ascending
//! indices, omitted entries are 0). Blank lines are skipped. With
//! feature_dim unset the dimension is the largest index seen.
LabeledData parse_sparse(std::istream& in, std::optional<Index> feature_dim = std::nullopt);
LabeledData load_sparse_file(const std::filesystem::path& path,
                             std::optional<Index> feature_dim = std::nullopt);
//! Writes non-zero entries with 17 significant digits.
void write_sparse_file(const std::filesystem::path& path, const Matrix& X, const Vector& labels);

//! Dense CSV: label first, then the features; no header.
LabeledData parse_dense_csv(std::istream& in);
LabeledData load_dense_csv(const std::filesystem::path& path);

//! All unordered pairs (a, b), a < b, of the sorted distinct classes.
std::vector<std::pair<double, double>> all_class_pairs(const Vector& labels);

std::string class_name(double label);

//! One binary task per pair: class a -> +1, class b -> -1, other samples
//! dropped, named "a_vs_b".
std::vector<TaskDataset> one_vs_one(const Matrix& X, const Vector& labels,
                                    const std::vector<std::pair<double, double>>& class_pairs);

struct SplitOptions {
  double train_frac = 0.5;
  std::uint64_t seed = 0;
  //! Draw the same number of training samples from each class.
  bool balanced = false;
};

//! Per-class sampling into train; the rest alternates validation / test so
//! validation gets the extra sample of an odd remainder.
TaskDataset stratified_split(const TaskDataset& ds, const SplitOptions& options);

enum class Construction { kNative, kOneVsOne };

struct Manifest {
  struct Entry {
    std::string name;
    std::filesystem::path path;
  };
  Index feature_dim = 0;
  Construction construction = Construction::kNative;
  std::vector<double> classes;  //!< one-vs-one only; empty = all classes found
  std::vector<Entry> tasks;
};

//! Relative task paths are resolved against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);

enum class DataFormat { kSparse, kDenseCsv };

//! Loads and constructs the (unsplit) binary tasks a manifest describes.
std::vector<TaskDataset> build_tasks(const Manifest& manifest,
                                     DataFormat format = DataFormat::kSparse);

//! Per-task min-max scaling to [0, 1] fitted on the training rows.
void min_max_scale(std::vector<TaskDataset>& tasks);

//! Bank over every task's training split.
KernelBank build_bank(const std::vector<TaskDataset>& tasks, const std::vector<KernelSpec>& specs,
                      std::size_t threads = 1);

}  // namespace mtmkl

#endif  // MTMKL_DATASET_HPP_
