#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fliplab/defense.hpp"
#include "fliplab/fault.hpp"
#include "fliplab/model.hpp"
#include "fliplab/profiler.hpp"

namespace fliplab {

using Json = nlohmann::ordered_json;

Json model_to_json(const QuantizedModel& model);
/// Throws ConfigError on schema or structural violations.
QuantizedModel model_from_json(const Json& j);

Json flips_to_json(const BitFlipSet& flips);
BitFlipSet flips_from_json(const Json& j);

Json profile_to_json(const SensitivityProfile& profile);
SensitivityProfile profile_from_json(const Json& j);

/// One object per signed layer: {layer, mu, sigma, q, rho, alpha_l, T_l}.
Json signatures_to_json(const std::vector<LayerSignature>& signatures, const std::vector<ImportanceFactors>& importances,
                        double m);
std::vector<LayerSignature> signatures_from_json(const Json& j);

/// File helpers; failures raise IoError naming the path.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
Json read_json(const std::filesystem::path& path);
/// Two-space indented dump followed by a newline.
void write_json(const std::filesystem::path& path, const Json& j);

QuantizedModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const QuantizedModel& model);

}  // namespace fliplab
