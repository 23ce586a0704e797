#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fliplab/baselines.hpp"
#include "fliplab/dataset.hpp"
#include "fliplab/defense.hpp"
#include "fliplab/io.hpp"
#include "fliplab/model.hpp"
#include "fliplab/profiler.hpp"
#include "fliplab/rl.hpp"
#include "fliplab/train.hpp"

namespace fliplab {

/// Where the train and eval splits come from: CSV files, or seeded blobs
/// sharing one set of class centres.
struct DataConfig {
    std::optional<std::filesystem::path> train_file;
    std::optional<std::filesystem::path> eval_file;
    BlobParams blobs{7, 4, 4000, 8, 0.7};
    std::size_t eval_samples = 1000;
};

struct DataSplits {
    Dataset train;
    Dataset eval;
};

/// Train stream seed = 100*s+1, eval stream seed = 100*s+2 (s = blobs.seed).
DataSplits load_or_generate(const DataConfig& cfg);

struct BaselineConfig {
    std::vector<Method> methods;
    std::size_t random_multiplier = 50;  // random_flips draws multiplier * |I_critical|
    BitChoice random_bits = BitChoice::msb;
    std::size_t budget = 64;             // greedy step budget
    std::size_t trials = 200;            // random_search subsets
    Extraction search_rule = Extraction::smallest_feasible;
};

struct EpsilonConfig {
    bool enabled = false;
    DetectionParams params;
};

struct DefenseConfig {
    /// ECC protection modes to run: "all", "flipset", "none".
    std::vector<std::string> ecc;
    EpsilonConfig epsilon;
};

struct CampaignConfig {
    DataConfig data;
    std::optional<std::filesystem::path> model_file;
    TrainConfig train;
    std::uint64_t model_seed = 7;
    ProfileConfig profile;
    RlConfig rl;
    BaselineConfig baselines;
    DefenseConfig defenses;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t workers = 1;
    std::filesystem::path output_dir = "out";

    void validate() const;
};

/// Parses one JSON document. Unknown keys and invalid values raise ConfigError.
CampaignConfig campaign_config_from_json(const Json& j);
Json campaign_config_to_json(const CampaignConfig& cfg);

/// The pinned reference configuration used by the acceptance run.
CampaignConfig desk_config();

struct Localization {
    std::map<std::string, std::size_t> by_role;    // every role, zero-filled
    std::map<std::size_t, std::size_t> by_layer;
    std::size_t total = 0;
};

Localization localization_report(const std::vector<BitFlipSet>& flip_sets, const QuantizedModel& model);

struct BaselineRow {
    Method method = Method::random_flips;
    BitFlipSet flips;
    double final_accuracy = 0.0;
    std::size_t evaluations = 0;
    std::optional<std::size_t> flips_to_tau;
    std::vector<double> curve;
};

struct DefenseRow {
    std::string mode;     // "ecc" or "epsilon"
    std::string setting;  // protection mode, or "m=..,blocks=.."
    double accuracy = 0.0;
    bool fault_detected = false;
    std::size_t corrected = 0;      // words (ecc) or weights (epsilon)
    std::size_t uncorrectable = 0;  // ecc only
};

struct SeedRecord {
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    SensitivityProfile profile;
    std::vector<TraceStep> trace;
    BitFlipSet critical;
    double baseline_accuracy = 0.0;
    double final_accuracy = 0.0;
    double perturbation_fraction = 0.0;
    std::size_t evaluations = 0;
    /// Accuracy after flipping the first i critical bits in candidate-rank order.
    std::vector<double> curve;
    std::vector<BaselineRow> baselines;
    std::vector<DefenseRow> defenses;
    Localization localization;
};

struct AblationRow {
    double alpha = 0.0;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    std::size_t flips = 0;
    double final_accuracy = 0.0;
};

struct ScalingPoint {
    std::size_t k = 0;
    std::size_t episodes = 0;
    std::size_t evaluations = 0;
    double wall_seconds = 0.0;  // informational only
};

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

struct ScalingResult {
    std::vector<ScalingPoint> points;
    LinearFit fit;
};

struct CampaignReport {
    Json config;
    double model_accuracy = 0.0;
    std::vector<SeedRecord> records;  // ascending seed
    Localization localization;        // across all successful records
    std::vector<AblationRow> ablation;
    std::optional<ScalingResult> scaling;
    /// Non-canonical; never part of the canonical JSON.
    std::map<std::uint64_t, double> wall_seconds;
};

/// Trains from cfg.train on the train split, or loads cfg.model_file.
QuantizedModel obtain_model(const CampaignConfig& cfg, const DataSplits& data);

/// One seed end to end: profile, attack, baselines, defenses.
SeedRecord run_seed(const CampaignConfig& cfg, const QuantizedModel& model, const Dataset& eval, std::uint64_t seed);

CampaignReport run_campaign(const CampaignConfig& cfg);

/// One attack per (alpha, seed); rows sorted by alpha then seed.
std::vector<AblationRow> ablation_alpha(const CampaignConfig& cfg, const QuantizedModel& model, const Dataset& eval,
                                        const std::vector<double>& grid);

/// Median |I_critical| over the successful rows at `alpha`.
std::optional<double> median_flips(const std::vector<AblationRow>& rows, double alpha);

/// Least squares; needs >= 3 points and at least two distinct x.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Phase 3 with the pool truncated to each k and the step budget set to
/// steps_per_candidate * k, seeded by `seed`.
ScalingResult scalability_sweep(const CampaignConfig& cfg, const QuantizedModel& model, const Dataset& eval,
                                const std::vector<std::size_t>& k_values, std::size_t steps_per_candidate,
                                std::uint64_t seed);

Json report_to_json(const CampaignReport& report);
CampaignReport report_from_json(const Json& j);

enum class ReportFormat { json, csv };
ReportFormat parse_report_format(std::string_view s);

/// json: report.json (canonical) plus timing.json. csv: curves.csv,
/// baselines.csv, defenses.csv and, when present, ablation.csv and scaling.csv.
/// Returns the files written.
std::vector<std::filesystem::path> emit_report(const CampaignReport& report, const std::filesystem::path& dir,
                                               ReportFormat format);

}  // namespace fliplab
