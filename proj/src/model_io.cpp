#include "mtmkl/model_io.hpp"

#include <fstream>

namespace mtmkl {

using nlohmann::json;

namespace {

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

json residuals_to_json(const ResidualNorms& r) {
  return {{"primal", r.primal}, {"dual", r.dual}, {"eps_primal", r.eps_primal},
          {"eps_dual", r.eps_dual}};
}

ResidualNorms residuals_from_json(const json& j) {
  ResidualNorms r;
  r.primal = j.at("primal").get<std::array<double, 3>>();
  r.dual = j.at("dual").get<std::array<double, 3>>();
  r.eps_primal = j.at("eps_primal").get<std::array<double, 3>>();
  r.eps_dual = j.at("eps_dual").get<std::array<double, 3>>();
  return r;
}

}  // namespace

json kernel_to_json(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::kLinear:
      return {{"type", "linear"}};
    case KernelKind::kPolynomial:
      return {{"type", "polynomial"}, {"degree", spec.degree}, {"coef0", spec.coef0}};
    case KernelKind::kGaussian:
      return {{"type", "gaussian"},
              {"spread", spec.spread},
              {"convention", spec.convention == GaussianConvention::kSigma ? "sigma" : "gamma"}};
  }
  return {};
}

KernelSpec kernel_from_json(const json& j, GaussianConvention default_convention) {
  KernelSpec spec;
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "linear") {
      spec = KernelSpec::Linear();
    } else if (type == "polynomial") {
      spec = KernelSpec::Polynomial(j.value("degree", 2), j.value("coef0", 1.0));
    } else if (type == "gaussian") {
      GaussianConvention convention = default_convention;
      if (j.contains("convention")) {
        const std::string c = j.at("convention").get<std::string>();
        if (c == "sigma") {
          convention = GaussianConvention::kSigma;
        } else if (c == "gamma") {
          convention = GaussianConvention::kGamma;
        } else {
          throw InputError("kernel: unknown gaussian convention '" + c + "'");
        }
      }
      spec = KernelSpec::Gaussian(j.at("spread").get<double>(), convention);
    } else {
      throw InputError("kernel: unknown type '" + type + "'");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("kernel: ") + e.what());
  }
  spec.Validate();
  return spec;
}

json model_to_json(const TrainedModel& model) {
  json kernels = json::array();
  for (const auto& k : model.kernels) kernels.push_back(kernel_to_json(k));
  json tasks = json::array();
  for (const auto& t : model.tasks) {
    json svs = json::array();
    for (Index i = 0; i < t.support_vectors.rows(); ++i) {
      svs.push_back(vector_to_json(t.support_vectors.row(i).transpose()));
    }
    tasks.push_back({{"name", t.name},
                     {"theta", vector_to_json(t.theta)},
                     {"bias", t.bias},
                     {"num_train", t.num_train},
                     {"svm_iterations", t.svm_iterations},
                     {"kkt_violation", t.kkt_violation},
                     {"support_indices", t.support_indices},
                     {"support_alpha", vector_to_json(t.support_alpha)},
                     {"support_labels", vector_to_json(t.support_labels)},
                     {"support_vectors", svs},
                     {"feature_dim", t.support_vectors.cols()}});
  }
  json trace = json::array();
  for (const auto& r : model.trace) {
    trace.push_back({{"iteration", r.iteration},
                     {"objective", r.objective.total},
                     {"norm_term", r.objective.norm},
                     {"hinge_term", r.objective.hinge},
                     {"fusion_term", r.objective.fusion},
                     {"admm_iterations", r.admm_iterations},
                     {"admm_converged", r.admm_converged},
                     {"step", r.step},
                     {"residuals", residuals_to_json(r.residuals)}});
  }
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"kernels", kernels},
          {"C", model.C},
          {"lambda", model.lambda},
          {"seed", model.seed},
          {"objective", model.objective},
          {"outer_iterations", model.outer_iterations},
          {"admm_iterations", model.admm_iterations},
          {"converged", model.converged},
          {"warnings", model.warnings},
          {"tasks", tasks},
          {"trace", trace}};
}

TrainedModel model_from_json(const json& j) {
  TrainedModel model;
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw InputError("not a model file");
    if (j.at("version").get<int>() != kModelVersion) {
      throw InputError("unsupported model version " + j.at("version").dump());
    }
    for (const auto& k : j.at("kernels")) model.kernels.push_back(kernel_from_json(k));
    model.C = j.at("C").get<double>();
    model.lambda = j.at("lambda").get<double>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.objective = j.at("objective").get<double>();
    model.outer_iterations = j.at("outer_iterations").get<long>();
    model.admm_iterations = j.at("admm_iterations").get<std::vector<long>>();
    model.converged = j.at("converged").get<bool>();
    model.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& t : j.at("tasks")) {
      TaskModel task;
      task.name = t.at("name").get<std::string>();
      task.theta = vector_from_json(t.at("theta"));
      task.bias = t.at("bias").get<double>();
      task.num_train = t.at("num_train").get<Index>();
      task.svm_iterations = t.value("svm_iterations", 0L);
      task.kkt_violation = t.value("kkt_violation", 0.0);
      task.support_indices = t.at("support_indices").get<IndexList>();
      task.support_alpha = vector_from_json(t.at("support_alpha"));
      task.support_labels = vector_from_json(t.at("support_labels"));
      const Index dim = t.at("feature_dim").get<Index>();
      const auto& svs = t.at("support_vectors");
      task.support_vectors.resize(static_cast<Index>(svs.size()), dim);
      for (std::size_t i = 0; i < svs.size(); ++i) {
        const Vector row = vector_from_json(svs[i]);
        if (row.size() != dim) throw InputError("support vector dimension mismatch");
        task.support_vectors.row(static_cast<Index>(i)) = row.transpose();
      }
      const auto n_sv = static_cast<Index>(task.support_indices.size());
      if (task.support_alpha.size() != n_sv || task.support_labels.size() != n_sv ||
          task.support_vectors.rows() != n_sv) {
        throw InputError("task '" + task.name + "': support arrays differ in length");
      }
      if (task.theta.size() != static_cast<Index>(model.kernels.size())) {
        throw InputError("task '" + task.name + "': theta length differs from the kernel menu");
      }
      model.tasks.push_back(std::move(task));
    }
    for (const auto& r : j.at("trace")) {
      IterationRecord rec;
      rec.iteration = r.at("iteration").get<long>();
      rec.objective.total = r.at("objective").get<double>();
      rec.objective.norm = r.at("norm_term").get<double>();
      rec.objective.hinge = r.at("hinge_term").get<double>();
      rec.objective.fusion = r.at("fusion_term").get<double>();
      rec.admm_iterations = r.at("admm_iterations").get<long>();
      rec.admm_converged = r.at("admm_converged").get<bool>();
      rec.step = r.at("step").get<double>();
      rec.residuals = residuals_from_json(r.at("residuals"));
      model.trace.push_back(rec);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
  return model;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model " + path.string());
  out << model_to_json(model).dump(2) << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("model " + path.string() + ": " + e.what(), 0);
  }
  return model_from_json(doc);
}

}  // namespace mtmkl
