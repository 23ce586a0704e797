#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fliplab/errors.hpp"
#include "fliplab/evaluator.hpp"
#include "fliplab/rl.hpp"
#include "support/fixtures.hpp"

using namespace fliplab;

TEST(Reward, Examples) {
    EXPECT_DOUBLE_EQ(reward(0.25, 3), -0.25);
    EXPECT_DOUBLE_EQ(reward(1.0, 5), 0.0);
    EXPECT_DOUBLE_EQ(reward(0.5, 0), -0.5);
}

TEST(QUpdate, BellmanExample) {
    QPolicy p;
    const std::vector<std::size_t> s{1}, s2{1, 2};
    p.set(s2, Action::remove, 0.4);
    q_update(p, s, Action::add, -0.25, s2, 0.1, 0.9);
    EXPECT_NEAR(p.q(s, Action::add), 0.1 * (-0.25 + 0.9 * 0.4), 1e-15);
    q_update(p, s, Action::add, -0.25, s2, 0.1, 0.9);
    EXPECT_NEAR(p.q(s, Action::add), 0.9 * 0.011 + 0.1 * 0.11, 1e-15);
    EXPECT_THROW(q_update(p, s, Action::add, std::nan(""), s2, 0.1, 0.9), ParameterError);
}

TEST(State, InitialHoldsWholePool) {
    const RlState s = RlState::initial({7, 2, 5});
    EXPECT_EQ(s.indices, (std::vector<std::size_t>{2, 5, 7}));
    EXPECT_EQ(s.rank_of(2), 1u);
    EXPECT_EQ(s.rank_of(9), 3u);
    EXPECT_FALSE(s.can_add());
    EXPECT_FALSE(s.can_shift());
    EXPECT_TRUE(s.can_remove());
    EXPECT_THROW(RlState::initial({1, 1}), ParameterError);
}

TEST(Transition, RankedMoves) {
    Rng rng = stage_rng(1, "t");
    RlState s;
    s.pool = {9, 4, 6, 1};
    s.indices = {1, 4};
    EXPECT_EQ(transition(s, Action::add, rng).indices, (std::vector<std::size_t>{1, 4, 9}));
    EXPECT_EQ(transition(s, Action::remove, rng).indices, (std::vector<std::size_t>{4}));
    EXPECT_EQ(transition(s, Action::shift, rng).indices, (std::vector<std::size_t>{4, 9}));
    RlState empty;
    empty.pool = s.pool;
    EXPECT_THROW(transition(empty, Action::remove, rng), ParameterError);
}

TEST(Transition, PropertiesUnderBothModes) {
    Rng rng = stage_rng(2, "transition-property");
    for (TransitionMode mode : {TransitionMode::ranked, TransitionMode::random}) {
        RlState s;
        s.pool = {3, 8, 1, 12, 5, 7};
        s.indices = {3};
        for (int step = 0; step < 300; ++step) {
            std::vector<Action> ok;
            for (Action a : kEnumOrder) {
                if (s.applicable(a)) ok.push_back(a);
            }
            ASSERT_FALSE(ok.empty());
            const Action a = ok[static_cast<std::size_t>(step) % ok.size()];
            const RlState n = transition(s, a, rng, mode);
            EXPECT_TRUE(std::is_sorted(n.indices.begin(), n.indices.end()));
            EXPECT_EQ(std::adjacent_find(n.indices.begin(), n.indices.end()), n.indices.end());
            for (auto p : n.indices) EXPECT_LT(n.rank_of(p), n.pool.size());
            const long delta = static_cast<long>(n.indices.size()) - static_cast<long>(s.indices.size());
            EXPECT_EQ(delta, a == Action::add ? 1 : a == Action::remove ? -1 : 0);
            if (a == Action::shift) {
                EXPECT_NE(n.indices, s.indices);
            }
            s = n.indices.empty() ? transition(n, Action::add, rng, mode) : n;
        }
    }
}

TEST(SelectAction, GreedyTiesFollowOrder) {
    Rng rng = stage_rng(3, "select");
    RlState s;
    s.pool = {1, 2, 3};
    s.indices = {1};
    QPolicy p;
    const ActionOrder order{Action::remove, Action::shift, Action::add};
    EXPECT_EQ(select_action(s, p, 0.0, rng, order), Action::remove);
    EXPECT_EQ(select_action(s, p, 0.0, rng), Action::add);
    p.set(s.indices, Action::shift, 0.5);
    EXPECT_EQ(select_action(s, p, 0.0, rng, order), Action::shift);
    RlState stuck;
    EXPECT_THROW(select_action(stuck, p, 0.0, rng), StuckStateError);
}

TEST(SelectAction, FullExplorationCoversApplicable) {
    Rng rng = stage_rng(4, "select-explore");
    RlState s = RlState::initial({1, 2});
    QPolicy p;
    for (int i = 0; i < 200; ++i) {
        const Action a = select_action(s, p, 1.0, rng);
        EXPECT_EQ(a, Action::remove);
    }
}

TEST(Preferred, ExtractionRules) {
    EXPECT_TRUE(preferred(0.3, 5, 0.4, 2, Extraction::lowest_accuracy, 0.35));
    EXPECT_TRUE(preferred(0.3, 2, 0.3, 5, Extraction::lowest_accuracy, 0.35));
    EXPECT_TRUE(preferred(0.34, 2, 0.1, 5, Extraction::smallest_feasible, 0.35));
    EXPECT_FALSE(preferred(0.5, 1, 0.3, 5, Extraction::smallest_feasible, 0.35));
    EXPECT_TRUE(preferred(0.2, 2, 0.3, 2, Extraction::smallest_feasible, 0.35));
}

TEST(RlConfig, Validation) {
    RlConfig c;
    EXPECT_NO_THROW(c.validate());
    c.discount = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.learn_rate = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.tie_order = {Action::add, Action::add, Action::shift};
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(parse_action("jump"), ConfigError);
}

class OptimizeFixture : public ::testing::Test {
  protected:
    Dataset data = fixtures::small_data();
    QuantizedModel model = fixtures::small_model(data);
};

TEST_F(OptimizeFixture, TraceAndExtractionAreConsistent) {
    const QuantizedModel before = model;
    RlState s0 = RlState::initial({0, 1, 2, 3, 4, 5, 6, 7});
    RlConfig cfg;
    cfg.episodes = 60;
    cfg.rng_seed = 5;
    cfg.failure_threshold = 0.6;
    const OptimizeResult r = optimize(model, 0, s0, data, cfg);
    EXPECT_EQ(model, before);
    EXPECT_EQ(r.trace.size(), 60u);
    EXPECT_EQ(r.evaluations, 61u);

    // Replay the trajectory from the primitives with a fresh table.
    Evaluator eval(model, data);
    RlState s = s0;
    Rng replay = stage_rng(cfg.rng_seed, "q-learning");
    QPolicy shadow;
    for (const auto& t : r.trace) {
        const Action a = select_action(s, shadow, cfg.epsilon, replay, cfg.tie_order);
        ASSERT_EQ(a, t.action);
        const RlState n = transition(s, a, replay);
        const double acc = eval.accuracy(BitFlipSet::msb(0, n.indices));
        EXPECT_DOUBLE_EQ(acc, t.accuracy);
        EXPECT_EQ(n.indices.size(), t.size);
        EXPECT_DOUBLE_EQ(reward(acc, n.indices.size()), t.reward);
        q_update(shadow, s.indices, a, -t.reward - 1.0, n.indices, cfg.learn_rate, cfg.discount);
        s = n;
    }
    EXPECT_EQ(shadow.table, r.policy.table);
    // Extraction: the returned set is the best visited state under smallest_feasible.
    std::vector<std::pair<double, std::size_t>> visited{{eval.accuracy(BitFlipSet::msb(0, s0.indices)), s0.indices.size()}};
    for (const auto& t : r.trace) visited.push_back({t.accuracy, t.size});
    auto chosen = visited.front();
    for (const auto& v : visited) {
        if (preferred(v.first, v.second, chosen.first, chosen.second, cfg.extraction, cfg.failure_threshold)) chosen = v;
    }
    EXPECT_DOUBLE_EQ(r.accuracy, chosen.first);
    EXPECT_EQ(r.flips.size(), chosen.second);
    EXPECT_DOUBLE_EQ(Evaluator(model, data).accuracy(r.flips), r.accuracy);
}

TEST_F(OptimizeFixture, DeterministicPerSeed) {
    RlConfig cfg;
    cfg.episodes = 40;
    cfg.epsilon = 0.5;
    cfg.transition = TransitionMode::random;
    cfg.rng_seed = 9;
    const RlState s0 = RlState::initial({0, 3, 6, 9, 12});
    const auto a = optimize(model, 0, s0, data, cfg);
    const auto b = optimize(model, 0, s0, data, cfg);
    EXPECT_EQ(a.flips, b.flips);
    EXPECT_EQ(a.policy.table, b.policy.table);
}

TEST_F(OptimizeFixture, EarlyStopAndErrors) {
    RlConfig cfg;
    cfg.episodes = 50;
    cfg.failure_threshold = 1.0;
    cfg.early_stop = true;
    const RlState s0 = RlState::initial({0, 1});
    EXPECT_TRUE(optimize(model, 0, s0, data, cfg).trace.empty());
    EXPECT_THROW(optimize(model, 1, s0, data, cfg), AddressError);
    RlState bad = s0;
    bad.indices.clear();
    EXPECT_THROW(optimize(model, 0, bad, data, cfg), ParameterError);
}

TEST_F(OptimizeFixture, PipelineAccounting) {
    ProfileConfig pc;
    pc.rate_percent = 10.0;
    RlConfig rc;
    rc.episodes = 20;
    const FlipLlmResult r = run_flipllm(model, data, pc, rc);
    EXPECT_EQ(r.evaluations, r.profile.evaluations + r.search.evaluations + 2);
    EXPECT_DOUBLE_EQ(r.final_accuracy, r.search.accuracy);
    EXPECT_DOUBLE_EQ(r.perturbation_fraction,
                     static_cast<double>(r.critical.size()) / (8.0 * static_cast<double>(model.total_weight_count())));
    for (const auto& a : r.critical) EXPECT_EQ(a.layer, r.profile.target_layer);
}

TEST(Reward, BoundedAndMonotone) {
    for (std::size_t size : {0u, 1u, 4u, 64u}) {
        double prev = 1.0;
        for (int i = 100; i >= 0; --i) {
            const double r = reward(i / 100.0, size);
            EXPECT_GE(r, -1.0);
            EXPECT_LE(r, 0.0);
            EXPECT_LT(r, prev);
            prev = r;
        }
    }
}

TEST_F(OptimizeFixture, QBoundAndTrackedMinimum) {
    RlConfig cfg;
    cfg.episodes = 80;
    cfg.epsilon = 0.3;
    cfg.rng_seed = 12;
    cfg.extraction = Extraction::lowest_accuracy;
    const RlState s0 = RlState::initial({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto r = optimize(model, 0, s0, data, cfg);
    for (const auto& [state, row] : r.policy.table) {
        for (double q : row) {
            EXPECT_TRUE(std::isfinite(q));
            EXPECT_LE(std::abs(q), 1.0 / (1.0 - cfg.discount));
        }
    }
    for (const auto& t : r.trace) EXPECT_LE(r.accuracy, t.accuracy);
}
