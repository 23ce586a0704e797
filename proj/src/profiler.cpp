#include "fliplab/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fliplab/errors.hpp"
#include "fliplab/evaluator.hpp"
#include "fliplab/rng.hpp"

namespace fliplab {

void ProfileConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
    if (!(rate_percent > 0.0 && rate_percent <= 100.0)) throw ConfigError("rate_percent must lie in (0,100]");
}

std::size_t ProfileConfig::k_for(std::size_t weight_count) const {
    const auto k = static_cast<std::size_t>(std::floor(rate_percent * static_cast<double>(weight_count) / 100.0));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(weight_count, 1));
}

const LayerProfileEntry& SensitivityProfile::entry_for(std::size_t layer) const {
    for (const auto& e : entries) {
        if (e.layer == layer) return e;
    }
    throw ParameterError("no profile entry for layer " + std::to_string(layer));
}

namespace {

std::vector<double> l2_normalized_abs(std::span<const double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<double> out(v.size(), 0.0);
    if (norm == 0.0) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::abs(v[i]) / norm;
    return out;
}

}  // namespace

std::vector<double> sensitivity_scores(const QuantizedTensor& weights, const GradientTensor& grads, double alpha) {
    if (weights.size() != grads.values.size()) throw DimensionError("weights and gradients differ in length");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in [0,1]");
    const auto w = l2_normalized_abs(weights.dequantize());
    const auto g = l2_normalized_abs(grads.values);
    std::vector<double> s(w.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = alpha * g[i] + (1.0 - alpha) * w[i];
    return s;
}

std::vector<std::size_t> ranked_top_k(std::span<const double> scores, std::size_t k) {
    if (k < 1 || k > scores.size()) {
        throw ParameterError("k=" + std::to_string(k) + " outside [1," + std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    idx.resize(k);
    return idx;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
    auto idx = ranked_top_k(scores, k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

SensitivityProfile profile_layers(const QuantizedModel& model, const Dataset& data, const ProfileConfig& cfg) {
    cfg.validate();
    const auto weighted = model.weighted_layers();
    if (weighted.empty()) throw ConfigError("model has no weighted layer to profile");
    if (data.empty()) throw EmptyInputError("profiling needs evaluation data");

    // One backward pass over a seeded subset, sliced per layer.
    std::vector<GradientTensor> grads;
    if (cfg.gradient_samples == 0 || cfg.gradient_samples >= data.size()) {
        grads = compute_gradients(model, data);
    } else {
        std::vector<std::size_t> idx(data.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng rng = stage_rng(cfg.eval_subset_seed, "profile-gradient-subset");
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(cfg.gradient_samples);
        std::sort(idx.begin(), idx.end());
        grads = compute_gradients(model, data.subset(idx));
    }

    Evaluator eval(model, data);
    SensitivityProfile profile;
    for (std::size_t layer : weighted) {
        const QuantizedTensor& w = *model.layers[layer].weights;
        LayerProfileEntry e;
        e.layer = layer;
        e.scores = sensitivity_scores(w, grads[layer], cfg.alpha);
        e.subset = top_k_indices(e.scores, cfg.k_for(w.size()));
        e.post_flip_accuracy = eval.accuracy(BitFlipSet::msb(layer, e.subset));
        profile.entries.push_back(std::move(e));
    }
    if (!(eval.model() == model)) throw InvariantError("profiling left the working model perturbed");

    const auto best = std::min_element(profile.entries.begin(), profile.entries.end(),
                                       [](const auto& a, const auto& b) { return a.post_flip_accuracy < b.post_flip_accuracy; });
    profile.target_layer = best->layer;
    profile.initial_candidates = ranked_top_k(best->scores, best->subset.size());
    profile.evaluations = eval.evaluations();
    return profile;
}

}  // namespace fliplab
