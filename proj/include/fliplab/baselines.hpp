#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "fliplab/dataset.hpp"
#include "fliplab/fault.hpp"
#include "fliplab/model.hpp"
#include "fliplab/rl.hpp"

namespace fliplab {

enum class Method { random_flips, gradient_greedy, greedy_selection, random_search, brute_force };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

/// Which bit a random flip hits.
enum class BitChoice { msb, uniform };

struct BaselineResult {
    Method method = Method::random_flips;
    BitFlipSet flips;
    double final_accuracy = 0.0;
    std::size_t evaluations = 0;
    /// Accuracy after each cumulative step (greedy methods only); entry 0 is
    /// the unperturbed accuracy.
    std::vector<double> curve;
};

/// n distinct flips drawn uniformly within `layer`, evaluated once.
BaselineResult random_flips(const QuantizedModel& model, const Dataset& data, std::size_t layer, std::size_t n,
                            std::uint64_t seed, BitChoice bits = BitChoice::msb);

/// Ranks every MSB candidate of `layer` by |g * dw| (dw = dequantized change
/// under the flip) and flips them cumulatively in that order until `budget`
/// flips or accuracy <= tau.
BaselineResult gradient_greedy(const QuantizedModel& model, const Dataset& data, std::size_t layer, std::size_t budget,
                               double tau = 0.0);

/// Forward selection over `pool`: each step keeps the candidate whose
/// addition loses the most accuracy per flip. Stops at `budget`, at
/// accuracy <= tau, or when no candidate lowers accuracy.
BaselineResult greedy_selection(const QuantizedModel& model, const Dataset& data, std::size_t layer,
                                const std::vector<std::size_t>& pool, std::size_t budget, double tau = 0.0);

/// `trials` random subsets of uniformly random size drawn from `pool`; the
/// kept subset follows `rule` (see Extraction).
BaselineResult random_search(const QuantizedModel& model, const Dataset& data, std::size_t layer,
                             const std::vector<std::size_t>& pool, std::size_t trials, std::uint64_t seed,
                             Extraction rule = Extraction::lowest_accuracy, double tau = 0.0);

inline constexpr std::size_t kBruteForcePoolLimit = 64;

/// Exhaustive search over every flip set of size 1..max_size (max_size <= 2)
/// drawn from `pool`; returns the lowest accuracy, ties toward smaller sets.
BaselineResult brute_force_oracle(const QuantizedModel& model, const Dataset& data, std::size_t layer,
                                  const std::vector<std::size_t>& pool, std::size_t max_size = 2);

/// Number of flips after which `curve` first reaches tau, if ever.
std::optional<std::size_t> flips_to_threshold(const std::vector<double>& curve, double tau);

}  // namespace fliplab
