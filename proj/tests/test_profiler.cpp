#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fliplab/errors.hpp"
#include "fliplab/io.hpp"
#include "fliplab/profiler.hpp"
#include "fliplab/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

using namespace fliplab;

TEST(Scores, AlphaEndpoints) {
    const QuantizedTensor w{{3, -4, 0}, 0.5, {3}};
    const GradientTensor g{{0.0, 6.0, -8.0}, {3}};
    const auto weight_only = sensitivity_scores(w, g, 0.0);
    EXPECT_NEAR(weight_only[0], 0.6, 1e-12);
    EXPECT_NEAR(weight_only[1], 0.8, 1e-12);
    EXPECT_NEAR(weight_only[2], 0.0, 1e-12);
    const auto grad_only = sensitivity_scores(w, g, 1.0);
    EXPECT_NEAR(grad_only[0], 0.0, 1e-12);
    EXPECT_NEAR(grad_only[1], 0.6, 1e-12);
    EXPECT_NEAR(grad_only[2], 0.8, 1e-12);
    const auto mixed = sensitivity_scores(w, g, 0.5);
    EXPECT_NEAR(mixed[1], 0.7, 1e-12);
}

TEST(Scores, ZeroGradientContributesNothing) {
    const QuantizedTensor w{{1, 2}, 1.0, {2}};
    const GradientTensor g{{0.0, 0.0}, {2}};
    const auto s = sensitivity_scores(w, g, 0.5);
    EXPECT_NEAR(s[0], 0.5 / std::sqrt(5.0), 1e-12);
    EXPECT_THROW(sensitivity_scores(w, GradientTensor{{1.0}, {1}}, 0.5), DimensionError);
    EXPECT_THROW(sensitivity_scores(w, g, 1.5), ParameterError);
}

TEST(TopK, TiesTowardLowerIndex) {
    const std::vector<double> s{0.5, 0.9, 0.5, 0.9, 0.1};
    EXPECT_EQ(top_k_indices(s, 3), (std::vector<std::size_t>{0, 1, 3}));
    EXPECT_EQ(ranked_top_k(s, 3), (std::vector<std::size_t>{1, 3, 0}));
    EXPECT_THROW(top_k_indices(s, 0), ParameterError);
    EXPECT_THROW(ranked_top_k(s, 6), ParameterError);
}

TEST(TopK, MatchesSortOracle) {
    Rng rng = stage_rng(4, "topk-property");
    std::uniform_int_distribution<int> v(0, 9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(20);
        for (auto& x : s) x = v(rng);
        std::vector<std::size_t> order(s.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
        const std::size_t k = 1 + trial % 20;
        std::vector<std::size_t> expect(order.begin(), order.begin() + k);
        EXPECT_EQ(ranked_top_k(s, k), expect);
        std::sort(expect.begin(), expect.end());
        EXPECT_EQ(top_k_indices(s, k), expect);
    }
}

TEST(ProfileConfig, KAndValidation) {
    ProfileConfig c;
    c.rate_percent = 1.5625;
    EXPECT_EQ(c.k_for(4096), 64u);
    c.rate_percent = 0.1;
    EXPECT_EQ(c.k_for(100), 1u);
    c.alpha = -0.1;
    EXPECT_THROW(c.validate(), ConfigError);
    c.alpha = 0.5;
    c.rate_percent = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Profile, MatchesFlipAndMeasureOracle) {
    const Dataset d = fixtures::small_data();
    const QuantizedModel m = fixtures::small_model(d);
    ProfileConfig cfg;
    cfg.rate_percent = 10.0;
    cfg.gradient_samples = 0;
    const SensitivityProfile p = profile_layers(m, d, cfg);
    ASSERT_EQ(p.entries.size(), m.weighted_layers().size());
    EXPECT_EQ(p.evaluations, p.entries.size());

    const auto grads = compute_gradients(m, d);
    const auto j = model_to_json(m);
    double best = 2.0;
    std::size_t best_layer = 0;
    for (const auto& e : p.entries) {
        const auto& w = *m.layers[e.layer].weights;
        EXPECT_EQ(e.subset, top_k_indices(sensitivity_scores(w, grads[e.layer], cfg.alpha), cfg.k_for(w.size())));
        auto flipped = j;
        for (std::size_t i : e.subset) {
            auto& slot = flipped["layers"][e.layer]["values"][i];
            slot = static_cast<int>(static_cast<std::int8_t>(static_cast<std::uint8_t>(slot.get<int>()) ^ 0x80U));
        }
        const double acc = oracle::accuracy(oracle::parse(flipped), d.inputs, d.labels, d.dim);
        EXPECT_NEAR(e.post_flip_accuracy, acc, 1e-12) << "layer " << e.layer;
        if (acc < best) {
            best = acc;
            best_layer = e.layer;
        }
    }
    EXPECT_EQ(p.target_layer, best_layer);
    const auto& target = p.entry_for(p.target_layer);
    EXPECT_EQ(p.initial_candidates, ranked_top_k(target.scores, target.subset.size()));
    EXPECT_THROW(p.entry_for(1), ParameterError);
}

TEST(Profile, EmptyDataRejected) {
    const Dataset d = fixtures::small_data();
    const QuantizedModel m = fixtures::small_model(d);
    Dataset empty;
    empty.dim = d.dim;
    EXPECT_THROW(profile_layers(m, empty, {}), EmptyInputError);
}
