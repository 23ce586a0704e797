#pragma once

// Full-precision mirror of QuantizedModel with reverse-mode gradients.
// Used for training and for gradient profiling on dequantized weights.

#include <span>
#include <vector>

#include "fliplab/model.hpp"

namespace fliplab::detail {

inline constexpr double kLayerNormEps = 1e-5;

struct FloatLayer {
    LayerTag tag = LayerTag::relu;
    Role role = Role::generic;
    std::vector<double> w;
    std::vector<double> b;
    std::size_t in = 0;
    std::size_t out = 0;
};

struct FloatNet {
    std::vector<FloatLayer> layers;
    std::vector<std::size_t> exits;
};

/// Activations recorded by forward() for use in backward().
struct Tape {
    std::vector<std::vector<double>> inputs;  // input of each layer
    std::vector<std::vector<double>> xhat;    // layer_norm only
    std::vector<double> inv_std;              // layer_norm only
    std::vector<std::vector<double>> logits;  // per exit
};

struct Grads {
    std::vector<std::vector<double>> dw;
    std::vector<std::vector<double>> db;

    explicit Grads(const FloatNet& net);
    void clear();
};

FloatNet dequantize(const QuantizedModel& model);
QuantizedModel quantize(const FloatNet& net);

void forward(const FloatNet& net, std::span<const double> x, Tape& tape);

/// Accumulates parameter gradients into `grads`. `dlogits[e]` is the loss
/// gradient at exit e; empty vectors mean the exit does not contribute.
void backward(const FloatNet& net, const Tape& tape, const std::vector<std::vector<double>>& dlogits,
              Grads& grads);

/// softmax(logits) - onehot(label), scaled by `weight`.
std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label, double weight);
double cross_entropy(std::span<const double> logits, std::size_t label);

}  // namespace fliplab::detail
