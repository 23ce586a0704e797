#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fliplab/dataset.hpp"
#include "fliplab/model.hpp"

namespace fliplab {

struct ProfileConfig {
    double alpha = 0.5;         // gradient share of the hybrid score
    double rate_percent = 0.1;  // k = floor(rate_percent * |W| / 100), at least 1
    std::uint64_t eval_subset_seed = 0;
    /// Samples used for the gradient pass; 0 or >= |data| uses everything.
    std::size_t gradient_samples = 256;

    void validate() const;
    std::size_t k_for(std::size_t weight_count) const;
};

struct LayerProfileEntry {
    std::size_t layer = 0;
    double post_flip_accuracy = 0.0;
    std::vector<std::size_t> subset;  // top-k by score, ascending index
    std::vector<double> scores;
};

struct SensitivityProfile {
    std::vector<LayerProfileEntry> entries;
    std::size_t target_layer = 0;
    /// Target layer's subset ordered by descending score (ties: lower index).
    std::vector<std::size_t> initial_candidates;
    std::size_t evaluations = 0;

    const LayerProfileEntry& entry_for(std::size_t layer) const;
};

/// alpha * |g / ||g||| + (1 - alpha) * |w / ||w|||. A zero-norm vector
/// contributes zeros.
std::vector<double> sensitivity_scores(const QuantizedTensor& weights, const GradientTensor& grads, double alpha);

/// Indices of the k largest scores (ties toward the lower index), ascending.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

/// Same selection as top_k_indices but ordered by descending score.
std::vector<std::size_t> ranked_top_k(std::span<const double> scores, std::size_t k);

/// Layer-wise flip-and-measure sweep; selects the layer whose top-k MSB flips
/// leave the lowest accuracy (ties toward the lower layer index).
SensitivityProfile profile_layers(const QuantizedModel& model, const Dataset& data, const ProfileConfig& cfg);

}  // namespace fliplab
