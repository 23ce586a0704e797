#include "fliplab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "float_net.hpp"
#include "fliplab/errors.hpp"
#include "fliplab/rng.hpp"

namespace fliplab {

std::vector<LayerSpec> desk_arch(std::size_t hidden) {
    return {
        {LayerTag::dense, Role::attn_q, hidden},
        {LayerTag::relu, Role::generic, 0},
        {LayerTag::softmax_exit, Role::generic, 0},
        {LayerTag::dense, Role::attn_o, hidden},
        {LayerTag::layer_norm, Role::norm, 0},
        {LayerTag::relu, Role::generic, 0},
        {LayerTag::softmax_exit, Role::generic, 0},
    };
}

namespace {

detail::FloatNet init_net(const std::vector<LayerSpec>& arch, std::size_t input_dim, std::size_t classes, Rng& rng) {
    if (arch.empty()) throw ConfigError("architecture is empty");
    if (arch.back().tag != LayerTag::softmax_exit) throw ConfigError("architecture must end with an exit");
    std::normal_distribution<double> gauss(0.0, 1.0);
    detail::FloatNet net;
    std::size_t width = input_dim;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const LayerSpec& s = arch[i];
        detail::FloatLayer l;
        l.tag = s.tag;
        l.role = s.role;
        l.in = width;
        l.out = width;
        switch (s.tag) {
            case LayerTag::dense:
            case LayerTag::softmax_exit: {
                if (s.tag == LayerTag::dense && s.units == 0) throw ConfigError("dense layer needs units > 0");
                l.out = s.tag == LayerTag::dense ? s.units : classes;
                const double std = std::sqrt((s.tag == LayerTag::dense ? 2.0 : 1.0) / static_cast<double>(l.in));
                l.w.resize(l.out * l.in);
                for (double& w : l.w) w = std * gauss(rng);
                l.b.assign(l.out, 0.0);
                if (s.tag == LayerTag::dense) {
                    width = l.out;
                } else {
                    net.exits.push_back(i);
                }
                break;
            }
            case LayerTag::layer_norm:
                l.w.assign(width, 1.0);
                l.b.assign(width, 0.0);
                break;
            case LayerTag::relu:
                break;
        }
        net.layers.push_back(std::move(l));
    }
    return net;
}

struct Adam {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;
    std::vector<std::vector<double>> m, v;

    void step(std::vector<double>& param, const std::vector<double>& grad, std::size_t slot, double decay) {
        if (m.size() <= slot) {
            m.resize(slot + 1);
            v.resize(slot + 1);
        }
        if (m[slot].empty()) {
            m[slot].assign(param.size(), 0.0);
            v[slot].assign(param.size(), 0.0);
        }
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double g = grad[i] + decay * param[i];
            m[slot][i] = beta1 * m[slot][i] + (1.0 - beta1) * g;
            v[slot][i] = beta2 * v[slot][i] + (1.0 - beta2) * g * g;
            param[i] -= lr * (m[slot][i] / c1) / (std::sqrt(v[slot][i] / c2) + eps);
        }
    }
};

}  // namespace

QuantizedModel train_reference(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed) {
    data.validate();
    if (data.empty()) throw EmptyInputError("training set is empty");
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");

    Rng rng = stage_rng(seed, "train");
    detail::FloatNet net = init_net(cfg.arch, data.dim, data.num_classes, rng);
    detail::Grads grads(net);
    detail::Tape tape;
    Adam opt{cfg.learning_rate, 0.9, 0.999, 1e-8, 0, {}, {}};

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::vector<double>> dlogits(net.exits.size());

    if (cfg.prune_fraction < 0.0 || cfg.prune_fraction >= 1.0) throw ConfigError("prune_fraction must lie in [0,1)");
    std::vector<std::vector<char>> masks;  // 1 = weight kept
    auto prune = [&] {
        masks.assign(net.layers.size(), {});
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            auto& l = net.layers[li];
            if (l.tag != LayerTag::dense && !(cfg.prune_exits && l.tag == LayerTag::softmax_exit)) continue;
            std::vector<double> mags(l.w.size());
            for (std::size_t i = 0; i < l.w.size(); ++i) mags[i] = std::abs(l.w[i]);
            const auto cut_rank = static_cast<std::size_t>(cfg.prune_fraction * static_cast<double>(mags.size()));
            if (cut_rank == 0) continue;
            std::vector<double> sorted = mags;
            std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(cut_rank - 1), sorted.end());
            const double cut = sorted[cut_rank - 1];
            masks[li].assign(l.w.size(), 1);
            for (std::size_t i = 0; i < l.w.size(); ++i) {
                if (mags[i] <= cut) {
                    masks[li][i] = 0;
                    l.w[i] = 0.0;
                }
            }
        }
    };
    auto apply_masks = [&] {
        for (std::size_t li = 0; li < masks.size(); ++li) {
            for (std::size_t i = 0; i < masks[li].size(); ++i) {
                if (!masks[li][i]) net.layers[li].w[i] = 0.0;
            }
        }
    };

    const std::size_t total_epochs = cfg.epochs + (cfg.prune_fraction > 0.0 ? cfg.finetune_epochs : 0);
    for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
        if (epoch == cfg.epochs && cfg.prune_fraction > 0.0) prune();
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double w = 1.0 / static_cast<double>(end - start);
            grads.clear();
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                detail::forward(net, data.row(i), tape);
                for (std::size_t e = 0; e < net.exits.size(); ++e) {
                    dlogits[e] = detail::cross_entropy_grad(tape.logits[e], data.labels[i], w);
                }
                detail::backward(net, tape, dlogits, grads);
            }
            ++opt.t;
            for (std::size_t li = 0; li < net.layers.size(); ++li) {
                auto& l = net.layers[li];
                if (l.w.empty()) continue;
                const double decay = l.tag == LayerTag::layer_norm ? 0.0 : cfg.weight_decay;
                opt.step(l.w, grads.dw[li], 2 * li, decay);
                opt.step(l.b, grads.db[li], 2 * li + 1, 0.0);
            }
            apply_masks();
        }
    }

    QuantizedModel model = detail::quantize(net);
    model.meta.seed = seed;
    model.meta.dataset_id = data.id;
    model.meta.train_accuracy = evaluate_accuracy(model, data);
    model.validate();
    if (model.meta.train_accuracy < cfg.accuracy_floor) {
        throw TrainingFailure("training accuracy " + std::to_string(model.meta.train_accuracy) +
                              " is below the configured floor " + std::to_string(cfg.accuracy_floor));
    }
    return model;
}

}  // namespace fliplab
