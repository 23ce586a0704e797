#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fliplab/dataset.hpp"

namespace fliplab {

enum class LayerTag { dense, relu, layer_norm, softmax_exit };

/// Architectural annotation used by the localization report. Has no effect
/// on the arithmetic.
enum class Role { generic, attn_q, attn_k, attn_v, attn_o, norm, ffn };

std::string to_string(LayerTag tag);
std::string to_string(Role role);
LayerTag parse_layer_tag(const std::string& s);
Role parse_role(const std::string& s);

struct QuantizedTensor {
    std::vector<std::int8_t> values;
    double scale = 1.0;
    std::vector<std::size_t> shape;

    std::size_t size() const { return values.size(); }
    std::vector<double> dequantize() const;
    void validate() const;

    bool operator==(const QuantizedTensor&) const = default;
};

struct GradientTensor {
    std::vector<double> values;
    std::vector<std::size_t> shape;
};

/// One stage of the network. `weights` is set for dense, layer_norm (gain)
/// and softmax_exit (projection); relu carries nothing.
///
/// Dense and exit weights are row-major [out, in].
struct Layer {
    LayerTag tag = LayerTag::relu;
    Role role = Role::generic;
    std::optional<QuantizedTensor> weights;
    std::vector<double> bias;

    bool has_weights() const { return weights.has_value(); }
    bool operator==(const Layer&) const = default;
};

struct ModelMeta {
    std::uint64_t seed = 0;
    std::string dataset_id;
    double train_accuracy = 0.0;

    bool operator==(const ModelMeta&) const = default;
};

struct QuantizedModel {
    std::vector<Layer> layers;
    std::vector<std::size_t> exits;  // positions of softmax_exit layers
    ModelMeta meta;

    std::size_t input_dim() const;
    std::size_t num_classes() const;
    std::size_t total_weight_count() const;
    /// Indices of layers that carry weights, ascending.
    std::vector<std::size_t> weighted_layers() const;
    /// Throws ConfigError if any structural invariant is violated.
    void validate() const;

    bool operator==(const QuantizedModel&) const = default;
};

/// Selects which exit head a prediction is read from.
struct ExitSelector {
    std::optional<std::size_t> index;  // position in `exits`; nullopt = final

    static ExitSelector final_exit() { return {}; }
    static ExitSelector at(std::size_t i) { return {i}; }
};

/// Symmetric per-tensor int8 quantization, scale = max|w| / 127.
QuantizedTensor quantize(std::span<const double> weights, std::vector<std::size_t> shape = {});

/// Logits for every exit, in exit order.
std::vector<std::vector<double>> forward(const QuantizedModel& model, std::span<const double> input);

/// Logits for a single exit; stops once that exit has been computed.
std::vector<double> forward_exit(const QuantizedModel& model, std::span<const double> input,
                                 ExitSelector exit = {});

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

std::vector<double> softmax(std::span<const double> logits);

double evaluate_accuracy(const QuantizedModel& model, const Dataset& data, ExitSelector exit = {});

/// Gradient of the mean final-exit cross-entropy with respect to every
/// dequantized weight tensor (straight-through on quantization). Entry i is
/// empty when layer i has no weights.
std::vector<GradientTensor> compute_gradients(const QuantizedModel& model, const Dataset& data);

/// Mean final-exit cross-entropy.
double mean_loss(const QuantizedModel& model, const Dataset& data);

}  // namespace fliplab
