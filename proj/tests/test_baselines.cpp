#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fliplab/baselines.hpp"
#include "fliplab/errors.hpp"
#include "fliplab/io.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

using namespace fliplab;

namespace {

// Accuracy of `model` with MSB flips of `params` in `layer`, via the oracle.
double oracle_accuracy(const QuantizedModel& model, const Dataset& d, std::size_t layer,
                       const std::vector<std::size_t>& params) {
    auto j = model_to_json(model);
    for (std::size_t i : params) {
        auto& slot = j["layers"][layer]["values"][i];
        slot = static_cast<int>(static_cast<std::int8_t>(static_cast<std::uint8_t>(slot.get<int>()) ^ 0x80U));
    }
    return oracle::accuracy(oracle::parse(j), d.inputs, d.labels, d.dim);
}

}  // namespace

class BaselineFixture : public ::testing::Test {
  protected:
    Dataset data = fixtures::small_data();
    QuantizedModel model = fixtures::small_model(data);
    std::vector<std::size_t> pool{0, 2, 5, 7, 11, 13, 17, 19, 23, 29};
};

TEST(FlipsToThreshold, Examples) {
    EXPECT_EQ(flips_to_threshold({0.9, 0.6, 0.3, 0.1}, 0.35), 2u);
    EXPECT_EQ(flips_to_threshold({0.3}, 0.35), 0u);
    EXPECT_FALSE(flips_to_threshold({0.9, 0.8}, 0.35).has_value());
}

TEST(Method, Names) {
    for (Method m : {Method::random_flips, Method::gradient_greedy, Method::greedy_selection, Method::random_search,
                     Method::brute_force}) {
        EXPECT_EQ(parse_method(to_string(m)), m);
    }
    EXPECT_THROW(parse_method("annealing"), ConfigError);
}

TEST_F(BaselineFixture, BruteForceMatchesOracleEnumeration) {
    const auto r = brute_force_oracle(model, data, 0, pool, 2);
    EXPECT_EQ(r.evaluations, pool.size() + pool.size() * (pool.size() - 1) / 2);
    double best = 2.0;
    std::size_t best_size = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double a = oracle_accuracy(model, data, 0, {pool[i]});
        if (a < best) best = a, best_size = 1;
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            const double a = oracle_accuracy(model, data, 0, {pool[i], pool[j]});
            if (a < best) best = a, best_size = 2;
        }
    }
    EXPECT_NEAR(r.final_accuracy, best, 1e-12);
    EXPECT_EQ(r.flips.size(), best_size);
}

TEST_F(BaselineFixture, BruteForceLimits) {
    std::vector<std::size_t> big(65);
    std::iota(big.begin(), big.end(), std::size_t{0});
    EXPECT_THROW(brute_force_oracle(model, data, 3, big), CapacityError);
    EXPECT_THROW(brute_force_oracle(model, data, 0, pool, 3), CapacityError);
    EXPECT_THROW(brute_force_oracle(model, data, 0, pool, 0), ParameterError);
}

TEST_F(BaselineFixture, RandomFlipsDistinctAndSeeded) {
    const auto a = random_flips(model, data, 3, 20, 4);
    const auto b = random_flips(model, data, 3, 20, 4);
    EXPECT_EQ(a.flips, b.flips);
    EXPECT_EQ(a.flips.size(), 20u);
    EXPECT_EQ(a.evaluations, 1u);
    for (const auto& f : a.flips) EXPECT_EQ(f.bit, kMsb);
    const auto u = random_flips(model, data, 3, 30, 4, BitChoice::uniform);
    EXPECT_EQ(u.flips.size(), 30u);
    EXPECT_THROW(random_flips(model, data, 3, 65, 1), ParameterError);
    EXPECT_THROW(random_flips(model, data, 1, 1, 1), AddressError);
}

TEST_F(BaselineFixture, GradientGreedyCurveMatchesOracle) {
    const auto r = gradient_greedy(model, data, 0, 6);
    ASSERT_EQ(r.curve.size(), r.flips.size() + 1);
    EXPECT_NEAR(r.curve.front(), oracle_accuracy(model, data, 0, {}), 1e-12);
    std::vector<std::size_t> params;
    for (const auto& f : r.flips) params.push_back(f.param);
    EXPECT_NEAR(r.final_accuracy, oracle_accuracy(model, data, 0, params), 1e-12);
    EXPECT_THROW(gradient_greedy(model, data, 0, 0), ParameterError);
}

TEST_F(BaselineFixture, GreedySelectionStrictlyDecreases) {
    const auto r = greedy_selection(model, data, 0, pool, 5);
    ASSERT_EQ(r.curve.size(), r.flips.size() + 1);
    for (std::size_t i = 1; i < r.curve.size(); ++i) EXPECT_LT(r.curve[i], r.curve[i - 1]);
    // The first pick is the single most damaging pool entry.
    if (r.flips.size() >= 1) {
        double best = 2.0;
        for (auto p : pool) best = std::min(best, oracle_accuracy(model, data, 0, {p}));
        EXPECT_NEAR(r.curve[1], best, 1e-12);
    }
    EXPECT_THROW(greedy_selection(model, data, 0, {}, 5), ParameterError);
    EXPECT_THROW(greedy_selection(model, data, 0, {1, 1}, 5), ParameterError);
}

TEST_F(BaselineFixture, RandomSearchKeepsPreferredSubset) {
    const auto r = random_search(model, data, 0, pool, 40, 3);
    EXPECT_EQ(r.evaluations, 40u);
    ASSERT_EQ(r.curve.size(), 40u);
    for (std::size_t i = 1; i < r.curve.size(); ++i) EXPECT_LE(r.curve[i], r.curve[i - 1]);
    std::vector<std::size_t> params;
    for (const auto& f : r.flips) {
        EXPECT_NE(std::find(pool.begin(), pool.end(), f.param), pool.end());
        params.push_back(f.param);
    }
    EXPECT_NEAR(r.final_accuracy, oracle_accuracy(model, data, 0, params), 1e-12);
    EXPECT_EQ(random_search(model, data, 0, pool, 40, 3).flips, r.flips);
    EXPECT_THROW(random_search(model, data, 0, pool, 0, 3), ParameterError);
}

TEST_F(BaselineFixture, GradientGreedyFirstPickMaximizesScore) {
    const auto r = gradient_greedy(model, data, 3, 1);
    ASSERT_EQ(r.flips.size(), 1u);
    const auto g = compute_gradients(model, data)[3];
    const auto& w = *model.layers[3].weights;
    std::size_t best = 0;
    double best_score = -1;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const int flipped = static_cast<std::int8_t>(static_cast<std::uint8_t>(w.values[i]) ^ 0x80U);
        const double s = std::abs(g.values[i] * (flipped - w.values[i]) * w.scale);
        if (s > best_score) best_score = s, best = i;
    }
    EXPECT_EQ(r.flips.addresses()[0].param, best);
}

TEST_F(BaselineFixture, SingletonPoolAndSingleTrial) {
    const auto bf = brute_force_oracle(model, data, 0, {5}, 2);
    EXPECT_EQ(bf.evaluations, 1u);
    EXPECT_EQ(bf.flips, (BitFlipSet{{0, 5, 7}}));
    const auto a = random_search(model, data, 0, pool, 1, 8);
    EXPECT_EQ(a.evaluations, 1u);
    EXPECT_EQ(random_search(model, data, 0, pool, 1, 8).flips, a.flips);
}

TEST_F(BaselineFixture, InputModelUntouched) {
    const QuantizedModel before = model;
    random_flips(model, data, 0, 5, 1);
    gradient_greedy(model, data, 0, 4);
    greedy_selection(model, data, 0, pool, 3);
    random_search(model, data, 0, pool, 5, 1);
    brute_force_oracle(model, data, 0, {1, 2, 3});
    EXPECT_EQ(model, before);
}
