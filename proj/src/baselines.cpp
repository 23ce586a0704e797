#include "fliplab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fliplab/errors.hpp"
#include "fliplab/evaluator.hpp"
#include "fliplab/rng.hpp"

namespace fliplab {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::random_flips: return "random_flips";
        case Method::gradient_greedy: return "gradient_greedy";
        case Method::greedy_selection: return "greedy_selection";
        case Method::random_search: return "random_search";
        case Method::brute_force: return "brute_force";
    }
    return "?";
}

Method parse_method(std::string_view s) {
    for (Method m : {Method::random_flips, Method::gradient_greedy, Method::greedy_selection, Method::random_search,
                     Method::brute_force}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown baseline method '" + std::string(s) + "'");
}

namespace {

const QuantizedTensor& layer_weights(const QuantizedModel& model, std::size_t layer) {
    if (layer >= model.layers.size() || !model.layers[layer].weights) {
        throw AddressError("layer " + std::to_string(layer) + " has no weights");
    }
    return *model.layers[layer].weights;
}

void check_pool(const QuantizedModel& model, std::size_t layer, const std::vector<std::size_t>& pool) {
    if (pool.empty()) throw ParameterError("candidate pool is empty");
    check_addresses(model, BitFlipSet::msb(layer, pool));
    std::vector<std::size_t> sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ParameterError("candidate pool contains duplicates");
    }
}

}  // namespace

BaselineResult random_flips(const QuantizedModel& model, const Dataset& data, std::size_t layer, std::size_t n,
                            std::uint64_t seed, BitChoice bits) {
    const std::size_t width = layer_weights(model, layer).size();
    const std::size_t candidates = bits == BitChoice::msb ? width : 8 * width;
    if (n > candidates) {
        throw ParameterError("cannot draw " + std::to_string(n) + " distinct flips from " + std::to_string(candidates) +
                             " candidates");
    }
    std::vector<std::size_t> order(candidates);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = stage_rng(seed, "random-flips");
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<BitAddress> addrs;
    addrs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (bits == BitChoice::msb) {
            addrs.push_back({layer, order[i], kMsb});
        } else {
            addrs.push_back({layer, order[i] / 8, static_cast<unsigned>(order[i] % 8)});
        }
    }
    BaselineResult out;
    out.method = Method::random_flips;
    out.flips = BitFlipSet(std::move(addrs));
    Evaluator eval(model, data);
    out.final_accuracy = eval.accuracy(out.flips);
    out.evaluations = eval.evaluations();
    return out;
}

BaselineResult gradient_greedy(const QuantizedModel& model, const Dataset& data, std::size_t layer, std::size_t budget,
                               double tau) {
    const QuantizedTensor& w = layer_weights(model, layer);
    if (budget == 0) throw ParameterError("budget must be at least 1");
    const GradientTensor g = compute_gradients(model, data)[layer];

    std::vector<double> score(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double dw = (static_cast<double>(flip_bit(w.values[i], kMsb)) - static_cast<double>(w.values[i])) * w.scale;
        score[i] = std::abs(g.values[i] * dw);
    }
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

    BaselineResult out;
    out.method = Method::gradient_greedy;
    Evaluator eval(model, data);
    out.curve.push_back(eval.baseline());
    std::vector<std::size_t> chosen;
    for (std::size_t step = 0; step < std::min(budget, order.size()); ++step) {
        if (out.curve.back() <= tau) break;
        chosen.push_back(order[step]);
        out.curve.push_back(eval.accuracy(BitFlipSet::msb(layer, chosen)));
    }
    out.flips = BitFlipSet::msb(layer, chosen);
    out.final_accuracy = out.curve.back();
    out.evaluations = eval.evaluations();
    return out;
}

BaselineResult greedy_selection(const QuantizedModel& model, const Dataset& data, std::size_t layer,
                                const std::vector<std::size_t>& pool, std::size_t budget, double tau) {
    check_pool(model, layer, pool);
    BaselineResult out;
    out.method = Method::greedy_selection;
    Evaluator eval(model, data);
    out.curve.push_back(eval.baseline());
    std::vector<std::size_t> chosen;
    std::vector<char> used(pool.size(), 0);
    while (chosen.size() < budget && out.curve.back() > tau && chosen.size() < pool.size()) {
        std::optional<std::size_t> best;
        double best_acc = 2.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (used[i]) continue;
            chosen.push_back(pool[i]);
            const double acc = eval.accuracy(BitFlipSet::msb(layer, chosen));
            chosen.pop_back();
            // Every candidate yields the same set size, so the largest loss per
            // flip is the lowest accuracy; ties keep the earlier pool entry.
            if (acc < best_acc) {
                best_acc = acc;
                best = i;
            }
        }
        if (!best || best_acc >= out.curve.back()) break;
        used[*best] = 1;
        chosen.push_back(pool[*best]);
        out.curve.push_back(best_acc);
    }
    out.flips = BitFlipSet::msb(layer, chosen);
    out.final_accuracy = out.curve.back();
    out.evaluations = eval.evaluations();
    return out;
}

BaselineResult random_search(const QuantizedModel& model, const Dataset& data, std::size_t layer,
                             const std::vector<std::size_t>& pool, std::size_t trials, std::uint64_t seed,
                             Extraction rule, double tau) {
    check_pool(model, layer, pool);
    if (trials == 0) throw ParameterError("trials must be at least 1");
    Rng rng = stage_rng(seed, "random-search");
    std::uniform_int_distribution<std::size_t> size_dist(1, pool.size());
    Evaluator eval(model, data);
    BaselineResult out;
    out.method = Method::random_search;
    std::vector<std::size_t> best;
    double best_acc = 2.0;
    std::vector<std::size_t> shuffled = pool;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t size = size_dist(rng);
        // Partial Fisher-Yates: the first `size` entries form a uniform subset.
        for (std::size_t i = 0; i < size; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, shuffled.size() - 1);
            std::swap(shuffled[i], shuffled[pick(rng)]);
        }
        std::vector<std::size_t> subset(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(size));
        const double acc = eval.accuracy(BitFlipSet::msb(layer, subset));
        if (best.empty() || preferred(acc, size, best_acc, best.size(), rule, tau)) {
            best = std::move(subset);
            best_acc = acc;
        }
        out.curve.push_back(best_acc);
    }
    out.flips = BitFlipSet::msb(layer, best);
    out.final_accuracy = best_acc;
    out.evaluations = eval.evaluations();
    return out;
}

BaselineResult brute_force_oracle(const QuantizedModel& model, const Dataset& data, std::size_t layer,
                                  const std::vector<std::size_t>& pool, std::size_t max_size) {
    if (pool.size() > kBruteForcePoolLimit) {
        throw CapacityError("brute force is limited to pools of " + std::to_string(kBruteForcePoolLimit) +
                            " candidates, got " + std::to_string(pool.size()));
    }
    if (max_size == 0) throw ParameterError("max_size must be at least 1");
    if (max_size > 2) throw CapacityError("brute force enumerates sets of size at most 2");
    check_pool(model, layer, pool);

    Evaluator eval(model, data);
    BaselineResult out;
    out.method = Method::brute_force;
    std::vector<std::size_t> best;
    double best_acc = 2.0;
    auto consider = [&](std::vector<std::size_t> set) {
        const double acc = eval.accuracy(BitFlipSet::msb(layer, set));
        if (acc < best_acc || (acc == best_acc && set.size() < best.size())) {
            best_acc = acc;
            best = std::move(set);
        }
    };
    for (std::size_t i = 0; i < pool.size(); ++i) consider({pool[i]});
    if (max_size == 2) {
        for (std::size_t i = 0; i < pool.size(); ++i) {
            for (std::size_t j = i + 1; j < pool.size(); ++j) consider({pool[i], pool[j]});
        }
    }
    out.flips = BitFlipSet::msb(layer, best);
    out.final_accuracy = best_acc;
    out.evaluations = eval.evaluations();
    return out;
}

std::optional<std::size_t> flips_to_threshold(const std::vector<double>& curve, double tau) {
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve[i] <= tau) return i;
    }
    return std::nullopt;
}

}  // namespace fliplab
