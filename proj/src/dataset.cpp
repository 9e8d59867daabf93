#include "mtmkl/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mtmkl {

Matrix TaskDataset::features(const IndexList& rows) const {
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = X.row(rows[r]);
  return out;
}

Vector TaskDataset::labels(const IndexList& rows) const {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = y(rows[r]);
  return out;
}

void TaskDataset::Validate() const {
  const std::string where = "task '" + name + "': ";
  if (X.rows() != y.size()) throw InputError(where + "feature rows and labels differ in count");
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) != 1.0 && y(i) != -1.0) throw InputError(where + "labels must be +1 or -1");
  }
  std::vector<int> seen(static_cast<std::size_t>(y.size()), 0);
  for (const IndexList* list : {&split.train, &split.validation, &split.test}) {
    for (Index i : *list) {
      if (i < 0 || i >= y.size()) throw InputError(where + "split index out of range");
      if (seen[static_cast<std::size_t>(i)]++) throw InputError(where + "split lists overlap");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw InputError(where + "split lists do not cover every sample");
  }
  bool pos = false;
  bool neg = false;
  for (Index i : split.train) (y(i) > 0 ? pos : neg) = true;
  if (!pos || !neg) throw UnlearnableTaskError(where + "training split contains a single class");
}

TaskDataset with_all_training(TaskDataset ds) {
  ds.split = Split{};
  for (Index i = 0; i < ds.size(); ++i) ds.split.train.push_back(i);
  return ds;
}

namespace {

bool parse_double(const std::string& token, double& value) {
  if (token.empty()) return false;
  const char* begin = token.c_str();
  char* end = nullptr;
  errno = 0;
  value = std::strtod(begin, &end);
  return end == begin + token.size() && errno != ERANGE && std::isfinite(value);
}

bool parse_index(const std::string& token, long& value) {
  if (token.empty() || token.size() > 12) return false;
  for (char c : token) {
    if (c < '0' || c > '9') return false;
  }
  value = std::stol(token);
  return value >= 1;
}

LabeledData assemble(const std::vector<double>& labels,
                     const std::vector<std::vector<std::pair<long, double>>>& rows, Index dim) {
  LabeledData out;
  out.X = Matrix::Zero(static_cast<Index>(rows.size()), dim);
  out.labels.resize(static_cast<Index>(labels.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.labels(static_cast<Index>(r)) = labels[r];
    for (const auto& [idx, val] : rows[r]) out.X(static_cast<Index>(r), idx - 1) = val;
  }
  return out;
}

}  // namespace

LabeledData parse_sparse(std::istream& in, std::optional<Index> feature_dim) {
  std::vector<double> labels;
  std::vector<std::vector<std::pair<long, double>>> rows;
  std::string line;
  std::size_t line_no = 0;
  long max_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::string token;
    if (!(tokens >> token)) continue;
    double label = 0.0;
    if (!parse_double(token, label)) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid label '" + token + "'",
                       line_no);
    }
    std::vector<std::pair<long, double>> entries;
    long previous = 0;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos || token.find(':', colon + 1) != std::string::npos) {
        throw ParseError("line " + std::to_string(line_no) + ": expected index:value, got '" +
                             token + "'",
                         line_no);
      }
      long index = 0;
      double value = 0.0;
      if (!parse_index(token.substr(0, colon), index)) {
        throw ParseError("line " + std::to_string(line_no) + ": invalid feature index in '" +
                             token + "'",
                         line_no);
      }
      if (!parse_double(token.substr(colon + 1), value)) {
        throw ParseError("line " + std::to_string(line_no) + ": invalid feature value in '" +
                             token + "'",
                         line_no);
      }
      if (index <= previous) {
        throw ParseError("line " + std::to_string(line_no) + ": feature indices must ascend",
                         line_no);
      }
      if (feature_dim && index > *feature_dim) {
        throw ParseError("line " + std::to_string(line_no) + ": feature index " +
                             std::to_string(index) + " exceeds dimension " +
                             std::to_string(*feature_dim),
                         line_no);
      }
      previous = index;
      max_index = std::max(max_index, index);
      entries.emplace_back(index, value);
    }
    labels.push_back(label);
    rows.push_back(std::move(entries));
  }
  return assemble(labels, rows, feature_dim ? *feature_dim : static_cast<Index>(max_index));
}

LabeledData load_sparse_file(const std::filesystem::path& path, std::optional<Index> feature_dim) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file " + path.string());
  try {
    return parse_sparse(in, feature_dim);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_sparse_file(const std::filesystem::path& path, const Matrix& X, const Vector& labels) {
  if (X.rows() != labels.size()) throw InputError("write_sparse_file: rows and labels differ");
  std::ofstream out(path);
  if (!out) throw InputError("cannot write data file " + path.string());
  char buffer[64];
  for (Index i = 0; i < X.rows(); ++i) {
    std::snprintf(buffer, sizeof buffer, "%.17g", labels(i));
    out << buffer;
    for (Index j = 0; j < X.cols(); ++j) {
      if (X(i, j) == 0.0) continue;
      std::snprintf(buffer, sizeof buffer, " %ld:%.17g", static_cast<long>(j + 1), X(i, j));
      out << buffer;
    }
    out << '\n';
  }
}

LabeledData parse_dense_csv(std::istream& in) {
  std::vector<double> labels;
  std::vector<std::vector<std::pair<long, double>>> rows;
  std::string line;
  std::size_t line_no = 0;
  long dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> fields;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      cell = first == std::string::npos ? "" : cell.substr(first, last - first + 1);
      double value = 0.0;
      if (!parse_double(cell, value)) {
        throw ParseError("line " + std::to_string(line_no) + ": invalid number '" + cell + "'",
                         line_no);
      }
      fields.push_back(value);
    }
    const long row_dim = static_cast<long>(fields.size()) - 1;
    if (row_dim < 1 || (dim >= 0 && row_dim != dim)) {
      throw ParseError("line " + std::to_string(line_no) + ": inconsistent column count", line_no);
    }
    dim = row_dim;
    labels.push_back(fields[0]);
    std::vector<std::pair<long, double>> entries;
    for (long j = 1; j <= dim; ++j) entries.emplace_back(j, fields[static_cast<std::size_t>(j)]);
    rows.push_back(std::move(entries));
  }
  return assemble(labels, rows, std::max<long>(dim, 0));
}

LabeledData load_dense_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file " + path.string());
  try {
    return parse_dense_csv(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

std::vector<std::pair<double, double>> all_class_pairs(const Vector& labels) {
  std::set<double> classes(labels.data(), labels.data() + labels.size());
  std::vector<double> sorted(classes.begin(), classes.end());
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t a = 0; a < sorted.size(); ++a) {
    for (std::size_t b = a + 1; b < sorted.size(); ++b) pairs.emplace_back(sorted[a], sorted[b]);
  }
  return pairs;
}

std::string class_name(double label) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", label);
  return buffer;
}

std::vector<TaskDataset> one_vs_one(const Matrix& X, const Vector& labels,
                                    const std::vector<std::pair<double, double>>& class_pairs) {
  if (X.rows() != labels.size()) throw InputError("one_vs_one: rows and labels differ");
  std::set<double> present(labels.data(), labels.data() + labels.size());
  if (present.size() < 2) throw ConstructionError("one_vs_one: fewer than two classes present");
  std::vector<TaskDataset> tasks;
  tasks.reserve(class_pairs.size());
  for (const auto& [a, b] : class_pairs) {
    if (a == b) throw ConstructionError("one_vs_one: pair of identical classes");
    IndexList rows;
    for (Index i = 0; i < labels.size(); ++i) {
      if (labels(i) == a || labels(i) == b) rows.push_back(i);
    }
    TaskDataset task;
    task.name = class_name(a) + "_vs_" + class_name(b);
    task.X.resize(static_cast<Index>(rows.size()), X.cols());
    task.y.resize(static_cast<Index>(rows.size()));
    Index pos = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      task.X.row(static_cast<Index>(r)) = X.row(rows[r]);
      task.y(static_cast<Index>(r)) = labels(rows[r]) == a ? 1.0 : -1.0;
      pos += labels(rows[r]) == a;
    }
    if (pos == 0 || pos == static_cast<Index>(rows.size())) {
      throw ConstructionError("one_vs_one: task " + task.name + " has an empty class");
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

TaskDataset stratified_split(const TaskDataset& ds, const SplitOptions& options) {
  if (!(options.train_frac > 0.0 && options.train_frac < 1.0)) {
    throw SplitError("stratified_split: train_frac must lie in (0, 1)");
  }
  std::map<double, IndexList> by_class;
  for (Index i = 0; i < ds.size(); ++i) by_class[ds.y(i)].push_back(i);
  const std::string where = "task '" + ds.name + "': ";
  if (by_class.size() < 2) throw SplitError(where + "needs samples of at least two classes");

  std::mt19937_64 rng(options.seed);
  auto shuffle = [&rng](IndexList& list) {
    for (std::size_t i = list.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(list[i - 1], list[pick(rng)]);
    }
  };

  const double per_class_balanced =
      options.train_frac * static_cast<double>(ds.size()) / static_cast<double>(by_class.size());
  TaskDataset out = ds;
  out.split = Split{};
  IndexList remainder;
  for (auto& [label, members] : by_class) {
    const long count = static_cast<long>(members.size());
    if (count < 2) {
      throw SplitError(where + "class " + class_name(label) + " has fewer than 2 samples");
    }
    const long n_train = std::lround(options.balanced
                                         ? per_class_balanced
                                         : options.train_frac * static_cast<double>(count));
    if (n_train < 1 || n_train > count - 1) {
      throw SplitError(where + "class " + class_name(label) + " with " + std::to_string(count) +
                       " samples cannot supply " + std::to_string(n_train) +
                       " training samples and a held-out remainder");
    }
    shuffle(members);
    out.split.train.insert(out.split.train.end(), members.begin(), members.begin() + n_train);
    remainder.insert(remainder.end(), members.begin() + n_train, members.end());
  }
  for (std::size_t k = 0; k < remainder.size(); ++k) {
    (k % 2 == 0 ? out.split.validation : out.split.test).push_back(remainder[k]);
  }
  std::sort(out.split.train.begin(), out.split.train.end());
  std::sort(out.split.validation.begin(), out.split.validation.end());
  std::sort(out.split.test.begin(), out.split.test.end());
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what(), 0);
  }
  Manifest manifest;
  try {
    manifest.feature_dim = doc.at("feature_dim").get<Index>();
    const auto& construction = doc.at("construction");
    if (construction.is_string() && construction.get<std::string>() == "native") {
      manifest.construction = Construction::kNative;
    } else if (construction.is_string() && construction.get<std::string>() == "one_vs_one") {
      manifest.construction = Construction::kOneVsOne;
    } else if (construction.is_object() && construction.contains("one_vs_one")) {
      manifest.construction = Construction::kOneVsOne;
      const auto& spec = construction.at("one_vs_one");
      if (spec.contains("classes")) manifest.classes = spec.at("classes").get<std::vector<double>>();
    } else {
      throw InputError("manifest: construction must be \"native\" or {\"one_vs_one\": {...}}");
    }
    const auto base = path.parent_path();
    for (const auto& entry : doc.at("tasks")) {
      Manifest::Entry e;
      e.name = entry.at("name").get<std::string>();
      std::filesystem::path p = entry.at("path").get<std::string>();
      e.path = p.is_absolute() ? p : base / p;
      manifest.tasks.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("manifest " + path.string() + ": " + e.what());
  }
  if (manifest.feature_dim < 1) throw InputError("manifest: feature_dim must be >= 1");
  if (manifest.tasks.empty()) throw InputError("manifest: no tasks listed");
  return manifest;
}

namespace {

LabeledData load_any(const std::filesystem::path& path, DataFormat format, Index dim) {
  LabeledData data = format == DataFormat::kSparse ? load_sparse_file(path, dim)
                                                   : load_dense_csv(path);
  if (data.X.rows() > 0 && data.X.cols() != dim) {
    throw InputError(path.string() + ": expected " + std::to_string(dim) + " features, found " +
                     std::to_string(data.X.cols()));
  }
  data.X.conservativeResize(data.X.rows(), dim);
  return data;
}

}  // namespace

std::vector<TaskDataset> build_tasks(const Manifest& manifest, DataFormat format) {
  std::vector<TaskDataset> tasks;
  if (manifest.construction == Construction::kNative) {
    for (const auto& entry : manifest.tasks) {
      LabeledData data = load_any(entry.path, format, manifest.feature_dim);
      TaskDataset task{entry.name, std::move(data.X), std::move(data.labels), {}};
      if (task.size() == 0) throw ConstructionError("task '" + task.name + "' has no samples");
      for (Index i = 0; i < task.size(); ++i) {
        if (task.y(i) != 1.0 && task.y(i) != -1.0) {
          throw ConstructionError("task '" + task.name + "': native tasks need +1/-1 labels");
        }
      }
      tasks.push_back(std::move(task));
    }
    return tasks;
  }

  std::vector<LabeledData> parts;
  Index total = 0;
  for (const auto& entry : manifest.tasks) {
    parts.push_back(load_any(entry.path, format, manifest.feature_dim));
    total += parts.back().X.rows();
  }
  Matrix X(total, manifest.feature_dim);
  Vector labels(total);
  Index row = 0;
  for (const auto& part : parts) {
    X.middleRows(row, part.X.rows()) = part.X;
    labels.segment(row, part.labels.size()) = part.labels;
    row += part.X.rows();
  }
  std::vector<std::pair<double, double>> pairs;
  if (manifest.classes.empty()) {
    pairs = all_class_pairs(labels);
  } else {
    std::vector<double> classes = manifest.classes;
    std::sort(classes.begin(), classes.end());
    if (std::adjacent_find(classes.begin(), classes.end()) != classes.end()) {
      throw ConstructionError("manifest: duplicate class in one_vs_one list");
    }
    for (std::size_t a = 0; a < classes.size(); ++a)
      for (std::size_t b = a + 1; b < classes.size(); ++b) pairs.emplace_back(classes[a], classes[b]);
  }
  if (pairs.empty()) throw ConstructionError("one_vs_one: fewer than two classes present");
  return one_vs_one(X, labels, pairs);
}

void min_max_scale(std::vector<TaskDataset>& tasks) {
  for (auto& task : tasks) {
    if (task.split.train.empty()) continue;
    const Matrix train = task.train_features();
    const Eigen::RowVectorXd lo = train.colwise().minCoeff();
    const Eigen::RowVectorXd range = train.colwise().maxCoeff() - lo;
    for (Index j = 0; j < task.X.cols(); ++j) {
      if (range(j) > 0) {
        task.X.col(j) = (task.X.col(j).array() - lo(j)) / range(j);
      } else {
        task.X.col(j).array() -= lo(j);
      }
    }
  }
}

KernelBank build_bank(const std::vector<TaskDataset>& tasks, const std::vector<KernelSpec>& specs,
                      std::size_t threads) {
  std::vector<Matrix> features;
  features.reserve(tasks.size());
  for (const auto& task : tasks) features.push_back(task.train_features());
  return build_bank(features, specs, threads);
}

}  // namespace mtmkl
