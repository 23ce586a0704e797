#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fliplab/fault.hpp"
#include "fliplab/model.hpp"

namespace fliplab {

// ---------------------------------------------------------------------------
// SECDED (72,64): extended Hamming code over one 64-bit data word.

/// Codeword bit numbering used by flip_codeword_bit: 0..63 are data bits,
/// 64..70 the Hamming parity bits p1,p2,p4,..,p64 and 71 the overall parity.
inline constexpr unsigned kCodewordBits = 72;

struct SecdedWord {
    std::uint64_t data = 0;
    std::uint8_t check = 0;

    bool operator==(const SecdedWord&) const = default;
};

enum class DecodeStatus { clean, corrected, uncorrectable };

std::string_view to_string(DecodeStatus s);

struct DecodeResult {
    std::uint64_t word = 0;
    DecodeStatus status = DecodeStatus::clean;
};

SecdedWord secded_encode(std::uint64_t word);
DecodeResult secded_decode(const SecdedWord& codeword);
SecdedWord flip_codeword_bit(SecdedWord codeword, unsigned position);

/// Consecutive 8-byte group of one layer's weights (the last may be padded).
struct WordAddress {
    std::size_t layer = 0;
    std::size_t word = 0;

    auto operator<=>(const WordAddress&) const = default;
};

using ProtectionPredicate = std::function<bool(const WordAddress&)>;

struct WordStatus {
    WordAddress address;
    std::size_t flips = 0;
    bool is_protected = false;
    /// Decoder outcome; only meaningful for protected words.
    DecodeStatus status = DecodeStatus::clean;
};

struct ProtectedApply {
    QuantizedModel model;
    std::vector<WordStatus> words;  // every touched word, ascending
};

/// Applies `flips` through simulated ECC memory: flips in protected words are
/// injected into the codeword and decoded, the rest land directly.
ProtectedApply protect_and_apply(const QuantizedModel& model, const BitFlipSet& flips,
                                 const ProtectionPredicate& is_protected);

// ---------------------------------------------------------------------------
// EPSILON statistical detection and mitigation.

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;

    bool operator==(const Quartiles&) const = default;
};

struct LayerSignature {
    std::size_t layer = 0;
    double mean = 0.0;
    double std = 0.0;  // population
    Quartiles quartiles;
    std::vector<double> rho;  // zero fraction per block

    bool operator==(const LayerSignature&) const = default;
};

struct ImportanceFactors {
    double beta_p = 0.0;
    double gamma_s = 0.0;
    double alpha_l = 0.0;
};

struct DetectionParams {
    double m = 3.0;
    double confidence_threshold = 0.9;
    std::size_t blocks = 16;

    void validate() const;
};

/// Linear-interpolation quartiles of `values` (position (n-1)p).
Quartiles quartiles_of(std::vector<double> values);

/// Zero fraction of each contiguous block of ceil(n/B) values; at most B blocks.
std::vector<double> block_zero_fractions(std::span<const std::int8_t> values, std::size_t blocks);

std::vector<LayerSignature> build_signatures(const QuantizedModel& model, std::size_t blocks);

/// `layer_index` is 1-based over all `total` layers.
ImportanceFactors layer_importance(std::size_t layer_index, std::size_t total, const Layer& kind);
ImportanceFactors layer_importance(std::size_t layer_index, std::size_t total, LayerTag tag, Role role);

/// Importance of every weighted layer of `model`, aligned with build_signatures.
std::vector<ImportanceFactors> model_importances(const QuantizedModel& model);

/// T = (m + alpha) * sigma.
double detection_threshold(double sigma, double alpha_l, double m);

/// L1 distance between two block-sparsity vectors.
double pattern_score(std::span<const double> rho_ref, std::span<const double> rho_cur);

/// Closest of (q1, median, q3); exact ties go to the smaller candidate.
double nearest_valid(double w, const Quartiles& q);

struct LayerCheck {
    std::size_t layer = 0;
    double score = 0.0;
    double threshold = 0.0;
    bool flagged = false;
    std::size_t corrected_weights = 0;
};

struct EpsilonVerdict {
    std::size_t label = 0;
    bool fault_detected = false;
    std::vector<std::size_t> corrected_layers;
    std::optional<std::size_t> exit_taken;  // position in model.exits; nullopt = final after stage 2
    std::vector<double> confidences;         // one per exit walked
};

/// Stage 2 on its own: score every signed layer, correct flagged ones in
/// place. Deterministic in the weights, independent of the input.
std::vector<LayerCheck> epsilon_scan_and_correct(QuantizedModel& model, const std::vector<LayerSignature>& signatures,
                                                 const std::vector<ImportanceFactors>& importances,
                                                 const DetectionParams& params);

/// Full two-stage inference for one input on a private copy of `model`.
EpsilonVerdict epsilon_infer(const QuantizedModel& model, const std::vector<LayerSignature>& signatures,
                             const std::vector<ImportanceFactors>& importances, const DetectionParams& params,
                             std::span<const double> x);

/// Runs epsilon_infer over a dataset. Stage 2 depends only on the weights, so
/// its outcome is computed once and shared by every low-confidence sample.
struct EpsilonSummary {
    double accuracy = 0.0;
    std::size_t early_exits = 0;
    std::size_t stage2_runs = 0;
    std::size_t detections = 0;  // samples whose verdict flagged a fault
    std::vector<LayerCheck> checks;
};

EpsilonSummary epsilon_evaluate(const QuantizedModel& model, const std::vector<LayerSignature>& signatures,
                                const std::vector<ImportanceFactors>& importances, const DetectionParams& params,
                                const Dataset& data);

/// exp(-alpha^2 / (2p)).
double missed_detection_bound(double alpha_l, double p);

/// (1 - gamma)^N + exp(-alpha^2 / (2p)).
double error_bound(double confidence_threshold, std::size_t num_exits, double alpha_l, double p);

}  // namespace fliplab
