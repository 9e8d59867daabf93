#ifndef MTMKL_MODEL_IO_HPP_
#define MTMKL_MODEL_IO_HPP_

#include <filesystem>

#include <json.hpp>

#include "mtmkl/kernel_bank.hpp"
#include "mtmkl/trainer.hpp"

namespace mtmkl {

inline constexpr const char* kModelFormat = "mtmkl-model";
inline constexpr int kModelVersion = 1;

nlohmann::json kernel_to_json(const KernelSpec& spec);
//! Accepts {"type": "linear" | "polynomial" | "gaussian", ...}; gaussian
//! entries without "convention" use `default_convention`.
KernelSpec kernel_from_json(const nlohmann::json& j,
                            GaussianConvention default_convention = GaussianConvention::kSigma);

nlohmann::json model_to_json(const TrainedModel& model);
//! Throws InputError on an unknown format / version or a malformed document.
TrainedModel model_from_json(const nlohmann::json& j);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace mtmkl

#endif  // MTMKL_MODEL_IO_HPP_
