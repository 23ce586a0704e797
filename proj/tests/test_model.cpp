#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fliplab/dataset.hpp"
#include "fliplab/errors.hpp"
#include "fliplab/io.hpp"
#include "fliplab/model.hpp"
#include "fliplab/rng.hpp"
#include "fliplab/train.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

using namespace fliplab;

namespace {

// One dense layer followed by its exit, both with given int8 values.
QuantizedModel linear_model(std::vector<std::int8_t> dense, std::size_t in, std::size_t out, double scale = 1.0) {
    QuantizedModel m;
    Layer d;
    d.tag = LayerTag::dense;
    d.weights = QuantizedTensor{std::move(dense), scale, {out, in}};
    d.bias.assign(out, 0.0);
    Layer e;
    e.tag = LayerTag::softmax_exit;
    std::vector<std::int8_t> eye(out * out, 0);
    for (std::size_t i = 0; i < out; ++i) eye[i * out + i] = 1;
    e.weights = QuantizedTensor{eye, 1.0, {out, out}};
    e.bias.assign(out, 0.0);
    m.layers = {d, e};
    m.exits = {1};
    return m;
}

}  // namespace

TEST(Quantize, SymmetricRangeExample) {
    const auto t = quantize(std::vector<double>{-1.27, 0.635, 1.27});
    EXPECT_EQ(t.values, (std::vector<std::int8_t>{-127, 64, 127}));
    EXPECT_NEAR(t.scale, 0.01, 1e-15);
}

TEST(Quantize, ZeroAndMax) {
    const auto t = quantize(std::vector<double>{0.0, 1.27});
    EXPECT_EQ(t.values, (std::vector<std::int8_t>{0, 127}));
    EXPECT_NEAR(t.scale, 0.01, 1e-15);
}

TEST(Quantize, AllZeroIsDegenerate) {
    EXPECT_THROW(quantize(std::vector<double>{0.0, 0.0}), DegenerateScaleError);
}

TEST(Quantize, RoundTripIsFixedPoint) {
    Rng rng = stage_rng(9, "quantize-property");
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> w(37);
        for (auto& v : w) v = n(rng);
        const auto q1 = quantize(w);
        const auto q2 = quantize(q1.dequantize());
        EXPECT_EQ(q1.values, q2.values);
        for (auto v : q1.values) {
            EXPECT_GE(v, -127);
            EXPECT_LE(v, 127);
        }
    }
}

TEST(Forward, IdentityLayer) {
    const auto m = linear_model({1, 0, 0, 1}, 2, 2);
    const auto out = forward(m, std::vector<double>{3.0, -2.0});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], (std::vector<double>{3.0, -2.0}));
}

TEST(Forward, WrongInputLengthThrows) {
    const auto m = linear_model({1, 0, 0, 1}, 2, 2);
    EXPECT_THROW(forward(m, std::vector<double>{1.0}), DimensionError);
    EXPECT_THROW(forward_exit(m, std::vector<double>{1.0, 2.0, 3.0}), DimensionError);
}

TEST(Forward, MatchesIndependentOracle) {
    const Dataset d = fixtures::small_data();
    const QuantizedModel m = fixtures::small_model(d);
    const oracle::Net net = oracle::parse(model_to_json(m));
    for (std::size_t i = 0; i < 20; ++i) {
        const auto mine = forward(m, d.row(i));
        const auto ref = oracle::logits(net, std::vector<double>(d.row(i).begin(), d.row(i).end()));
        ASSERT_EQ(mine.size(), ref.size());
        for (std::size_t e = 0; e < mine.size(); ++e) {
            for (std::size_t c = 0; c < mine[e].size(); ++c) EXPECT_NEAR(mine[e][c], ref[e][c], 1e-6);
        }
    }
}

TEST(Forward, ExitsEmittedInOrderAndSelectable) {
    const Dataset d = fixtures::small_data();
    const QuantizedModel m = fixtures::small_model(d);
    ASSERT_EQ(m.exits.size(), 2u);
    EXPECT_LT(m.exits[0], m.exits[1]);
    const auto all = forward(m, d.row(0));
    EXPECT_EQ(forward_exit(m, d.row(0), ExitSelector::at(0)), all[0]);
    EXPECT_EQ(forward_exit(m, d.row(0)), all[1]);
    EXPECT_THROW(forward_exit(m, d.row(0), ExitSelector::at(2)), ParameterError);
}

TEST(Argmax, TiesGoLow) {
    EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0}), 1u);
    EXPECT_EQ(argmax(std::vector<double>{0.0, 0.0}), 0u);
    EXPECT_THROW(argmax(std::vector<double>{}), EmptyInputError);
}

TEST(Accuracy, ConstantPredictor) {
    // All-zero weights with a bias favouring class 0.
    QuantizedModel m = linear_model({1, 1, 1, 1, 1, 1, 1, 1}, 2, 4);
    m.layers[0].weights->values.assign(8, 0);
    m.layers[0].bias = {1.0, 0.0, 0.0, 0.0};
    Dataset d;
    d.dim = 2;
    d.num_classes = 4;
    for (std::size_t i = 0; i < 8; ++i) {
        d.inputs.insert(d.inputs.end(), {static_cast<double>(i), 1.0});
        d.labels.push_back(i % 4);
    }
    EXPECT_DOUBLE_EQ(evaluate_accuracy(m, d), 0.25);
    EXPECT_THROW(evaluate_accuracy(m, Dataset{}), EmptyInputError);
}

TEST(Train, SeparableSingleDenseLayer) {
    const Dataset d = make_blobs({1, 2, 400, 2, 0.2});
    TrainConfig cfg;
    cfg.arch = {{LayerTag::softmax_exit, Role::generic, 0}};
    cfg.epochs = 20;
    const QuantizedModel m = train_reference(cfg, d, 1);
    EXPECT_GE(evaluate_accuracy(m, d), 0.99);
}

TEST(Train, DeterministicBytes) {
    const Dataset d = fixtures::small_data();
    const auto a = fixtures::small_model(d, 5);
    const auto b = fixtures::small_model(d, 5);
    EXPECT_EQ(model_to_json(a).dump(), model_to_json(b).dump());
    EXPECT_GT(a.meta.train_accuracy, 0.9);
}

TEST(Train, FloorRaisesTrainingFailure) {
    const Dataset d = make_blobs({2, 4, 80, 4, 5.0});
    TrainConfig cfg;
    cfg.arch = {{LayerTag::softmax_exit, Role::generic, 0}};
    cfg.epochs = 1;
    cfg.accuracy_floor = 0.99;
    EXPECT_THROW(train_reference(cfg, d, 2), TrainingFailure);
}

TEST(Train, PruningZeroesRequestedFraction) {
    const Dataset d = make_blobs({4, 4, 400, 8, 0.5});
    TrainConfig cfg;
    cfg.arch = {{LayerTag::dense, Role::attn_q, 32}, {LayerTag::relu, Role::generic, 0},
                {LayerTag::softmax_exit, Role::generic, 0}};
    cfg.epochs = 10;
    cfg.prune_fraction = 0.5;
    cfg.finetune_epochs = 3;
    const QuantizedModel m = train_reference(cfg, d, 4);
    const auto& v = m.layers[0].weights->values;
    const auto zeros = std::count(v.begin(), v.end(), std::int8_t{0});
    EXPECT_GE(zeros, static_cast<long>(v.size() / 2));
    cfg.prune_fraction = 1.0;
    EXPECT_THROW(train_reference(cfg, d, 4), ConfigError);
}

TEST(Gradients, MatchCentralDifferencesThroughOracle) {
    const Dataset d = make_blobs({8, 3, 50, 4, 0.8});
    TrainConfig cfg;
    cfg.arch = {{LayerTag::dense, Role::generic, 6}, {LayerTag::layer_norm, Role::norm, 0},
                {LayerTag::relu, Role::generic, 0}, {LayerTag::softmax_exit, Role::generic, 0}};
    cfg.epochs = 4;
    cfg.accuracy_floor = 0.0;
    const QuantizedModel m = train_reference(cfg, d, 8);
    ASSERT_LE(m.total_weight_count(), 200u);
    const auto grads = compute_gradients(m, d);
    oracle::Net net = oracle::parse(model_to_json(m));
    auto loss = [&] {
        double total = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto z = oracle::logits(net, std::vector<double>(d.row(i).begin(), d.row(i).end())).back();
            const double mx = *std::max_element(z.begin(), z.end());
            double se = 0;
            for (double v : z) se += std::exp(v - mx);
            total -= z[d.labels[i]] - mx - std::log(se);
        }
        return total / static_cast<double>(d.size());
    };
    EXPECT_NEAR(loss(), mean_loss(m, d), 1e-9);
    for (std::size_t li : m.weighted_layers()) {
        for (std::size_t k = 0; k < net.stages[li].w.size(); ++k) {
            const double h = 1e-6, w0 = net.stages[li].w[k];
            net.stages[li].w[k] = w0 + h;
            const double up = loss();
            net.stages[li].w[k] = w0 - h;
            const double dn = loss();
            net.stages[li].w[k] = w0;
            const double g = grads[li].values[k];
            EXPECT_NEAR((up - dn) / (2 * h), g, std::max(1e-4, 1e-3 * std::abs(g))) << "layer " << li << " weight " << k;
        }
    }
}

TEST(Gradients, DatasetGradientIsMeanOfSampleGradients) {
    const Dataset d = fixtures::small_data(3, 30);
    const QuantizedModel m = fixtures::small_model(fixtures::small_data());
    const auto full = compute_gradients(m, d);
    std::vector<std::vector<double>> sum(full.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const std::size_t idx[] = {i};
        const auto gi = compute_gradients(m, d.subset(idx));
        for (std::size_t l = 0; l < gi.size(); ++l) {
            sum[l].resize(gi[l].values.size(), 0.0);
            for (std::size_t k = 0; k < gi[l].values.size(); ++k) sum[l][k] += gi[l].values[k];
        }
    }
    for (std::size_t l = 0; l < full.size(); ++l) {
        for (std::size_t k = 0; k < full[l].values.size(); ++k) {
            EXPECT_NEAR(full[l].values[k], sum[l][k] / d.size(), 1e-12);
        }
    }
}

TEST(Gradients, ConfidentCorrectSamplesHaveTinyGradient) {
    // Huge-margin identity classifier: softmax saturates at the true class.
    QuantizedModel m = linear_model({127, 0, 0, 127}, 2, 2, 1.0);
    Dataset d;
    d.dim = 2;
    d.num_classes = 2;
    d.inputs = {1.0, 0.0, 0.0, 1.0};
    d.labels = {0, 1};
    double norm = 0;
    for (const auto& g : compute_gradients(m, d)) {
        for (double v : g.values) norm += v * v;
    }
    EXPECT_LT(std::sqrt(norm), 1e-6);
}

TEST(ModelValidate, RejectsBrokenStructure) {
    QuantizedModel m = linear_model({1, 0, 0, 1}, 2, 2);
    m.exits = {};
    EXPECT_THROW(m.validate(), ConfigError);
    m = linear_model({1, 0, 0, 1}, 2, 2);
    m.layers[0].bias = {0.0};
    EXPECT_THROW(m.validate(), ConfigError);
    EXPECT_NO_THROW(linear_model({1, 0, 0, 1}, 2, 2).validate());
}
