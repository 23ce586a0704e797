#include "fliplab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "float_net.hpp"
#include "fliplab/errors.hpp"

namespace fliplab {

std::string to_string(LayerTag tag) {
    switch (tag) {
        case LayerTag::dense: return "dense";
        case LayerTag::relu: return "relu";
        case LayerTag::layer_norm: return "layer_norm";
        case LayerTag::softmax_exit: return "softmax_exit";
    }
    return "?";
}

std::string to_string(Role role) {
    switch (role) {
        case Role::generic: return "generic";
        case Role::attn_q: return "attn_q";
        case Role::attn_k: return "attn_k";
        case Role::attn_v: return "attn_v";
        case Role::attn_o: return "attn_o";
        case Role::norm: return "norm";
        case Role::ffn: return "ffn";
    }
    return "?";
}

LayerTag parse_layer_tag(const std::string& s) {
    for (auto t : {LayerTag::dense, LayerTag::relu, LayerTag::layer_norm, LayerTag::softmax_exit}) {
        if (to_string(t) == s) return t;
    }
    if (s == "exit") return LayerTag::softmax_exit;
    throw ConfigError("unknown layer kind '" + s + "'");
}

Role parse_role(const std::string& s) {
    for (auto r : {Role::generic, Role::attn_q, Role::attn_k, Role::attn_v, Role::attn_o, Role::norm, Role::ffn}) {
        if (to_string(r) == s) return r;
    }
    throw ConfigError("unknown role '" + s + "'");
}

std::vector<double> QuantizedTensor::dequantize() const {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = scale * values[i];
    return out;
}

void QuantizedTensor::validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("tensor scale must be positive and finite");
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (n != values.size()) throw DimensionError("tensor shape does not match value count");
}

QuantizedTensor quantize(std::span<const double> weights, std::vector<std::size_t> shape) {
    double max_abs = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w)) throw ParameterError("cannot quantize non-finite weight");
        max_abs = std::max(max_abs, std::abs(w));
    }
    if (max_abs == 0.0) throw DegenerateScaleError("cannot quantize an all-zero tensor");

    QuantizedTensor t;
    t.scale = max_abs / 127.0;
    t.shape = shape.empty() ? std::vector<std::size_t>{weights.size()} : std::move(shape);
    t.values.reserve(weights.size());
    for (double w : weights) {
        // w / max_abs is exact at the extremes, so +-max always maps to +-127.
        const double q = std::round(w / max_abs * 127.0);
        t.values.push_back(static_cast<std::int8_t>(std::clamp(q, -127.0, 127.0)));
    }
    t.validate();
    return t;
}

std::size_t QuantizedModel::input_dim() const {
    for (const auto& l : layers) {
        if (!l.weights) continue;
        if (l.tag == LayerTag::layer_norm) return l.weights->shape.at(0);
        return l.weights->shape.at(1);
    }
    throw ConfigError("model has no weighted layer");
}

std::size_t QuantizedModel::num_classes() const {
    if (exits.empty()) throw ConfigError("model has no exit");
    return layers.at(exits.back()).weights->shape.at(0);
}

std::size_t QuantizedModel::total_weight_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        if (l.weights) n += l.weights->size();
    }
    return n;
}

std::vector<std::size_t> QuantizedModel::weighted_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weights) out.push_back(i);
    }
    return out;
}

void QuantizedModel::validate() const {
    if (layers.empty()) throw ConfigError("model has no layers");
    if (exits.empty()) throw ConfigError("model has no exits");
    if (exits.back() != layers.size() - 1) throw ConfigError("last exit must follow the final layer");
    std::vector<std::size_t> found;
    std::size_t width = input_dim();
    std::size_t classes = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        const std::string where = "layer " + std::to_string(i) + ": ";
        switch (l.tag) {
            case LayerTag::relu:
                if (l.weights || !l.bias.empty()) throw ConfigError(where + "relu carries no parameters");
                break;
            case LayerTag::layer_norm:
                if (!l.weights || l.weights->shape.size() != 1 || l.weights->shape[0] != width || l.bias.size() != width) {
                    throw ConfigError(where + "layer_norm gain/bias must match width " + std::to_string(width));
                }
                break;
            case LayerTag::dense:
            case LayerTag::softmax_exit: {
                if (!l.weights || l.weights->shape.size() != 2) throw ConfigError(where + "projection needs a 2-d tensor");
                const auto out = l.weights->shape[0];
                if (l.weights->shape[1] != width) throw ConfigError(where + "input width mismatch");
                if (l.bias.size() != out) throw ConfigError(where + "bias length mismatch");
                if (l.tag == LayerTag::dense) {
                    width = out;
                } else {
                    if (classes != 0 && classes != out) throw ConfigError(where + "exits disagree on class count");
                    classes = out;
                    found.push_back(i);
                }
                break;
            }
        }
        if (l.weights) l.weights->validate();
        for (double b : l.bias) {
            if (!std::isfinite(b)) throw ConfigError(where + "non-finite bias");
        }
    }
    if (found != exits) throw ConfigError("exit list does not match softmax_exit layer positions");
}

namespace {

// y = scale * (Wq x) + b, Wq row-major [out, in].
void project(const Layer& l, std::span<const double> x, std::vector<double>& y) {
    const auto& t = *l.weights;
    const std::size_t out = t.shape[0];
    const std::size_t in = t.shape[1];
    if (x.size() != in) throw DimensionError("input width " + std::to_string(x.size()) + " != " + std::to_string(in));
    y.resize(out);
    const std::int8_t* w = t.values.data();
    for (std::size_t o = 0; o < out; ++o) {
        const std::int8_t* row = w + o * in;
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * x[i];
        y[o] = t.scale * acc + l.bias[o];
    }
}

void layer_norm(const Layer& l, std::vector<double>& h) {
    const auto& t = *l.weights;
    if (t.size() != h.size()) throw DimensionError("layer_norm width mismatch");
    const double d = static_cast<double>(h.size());
    double mean = 0.0;
    for (double v : h) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : h) var += (v - mean) * (v - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + detail::kLayerNormEps);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = t.scale * t.values[i] * ((h[i] - mean) * inv) + l.bias[i];
}

// Runs layers in order, invoking `on_exit(k, logits)` for each exit k. Stops
// early when on_exit returns false.
template <typename OnExit>
void run(const QuantizedModel& model, std::span<const double> input, OnExit&& on_exit) {
    if (input.size() != model.input_dim()) {
        throw DimensionError("input has " + std::to_string(input.size()) + " features, model expects " +
                             std::to_string(model.input_dim()));
    }
    std::vector<double> h(input.begin(), input.end());
    std::vector<double> tmp;
    std::size_t exit_no = 0;
    for (const Layer& l : model.layers) {
        switch (l.tag) {
            case LayerTag::dense:
                project(l, h, tmp);
                h.swap(tmp);
                break;
            case LayerTag::relu:
                for (double& v : h) v = std::max(v, 0.0);
                break;
            case LayerTag::layer_norm:
                layer_norm(l, h);
                break;
            case LayerTag::softmax_exit:
                project(l, h, tmp);
                if (!on_exit(exit_no++, tmp)) return;
                break;
        }
    }
}

}  // namespace

std::vector<std::vector<double>> forward(const QuantizedModel& model, std::span<const double> input) {
    std::vector<std::vector<double>> out;
    run(model, input, [&](std::size_t, const std::vector<double>& logits) {
        out.push_back(logits);
        return true;
    });
    return out;
}

std::vector<double> forward_exit(const QuantizedModel& model, std::span<const double> input, ExitSelector exit) {
    const std::size_t want = exit.index.value_or(model.exits.size() - 1);
    if (want >= model.exits.size()) throw ParameterError("exit index out of range");
    std::vector<double> result;
    run(model, input, [&](std::size_t k, const std::vector<double>& logits) {
        if (k != want) return true;
        result = logits;
        return false;
    });
    return result;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw EmptyInputError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw EmptyInputError("softmax of empty vector");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

double evaluate_accuracy(const QuantizedModel& model, const Dataset& data, ExitSelector exit) {
    if (data.empty()) throw EmptyInputError("cannot evaluate accuracy on an empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto logits = forward_exit(model, data.row(i), exit);
        if (argmax(logits) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<GradientTensor> compute_gradients(const QuantizedModel& model, const Dataset& data) {
    if (data.empty()) throw EmptyInputError("cannot compute gradients on an empty dataset");
    if (data.dim != model.input_dim()) throw DimensionError("dataset width does not match model input");
    const detail::FloatNet net = detail::dequantize(model);
    detail::Grads grads(net);
    detail::Tape tape;
    const double w = 1.0 / static_cast<double>(data.size());
    std::vector<std::vector<double>> dlogits(net.exits.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        detail::forward(net, data.row(i), tape);
        dlogits.back() = detail::cross_entropy_grad(tape.logits.back(), data.labels[i], w);
        detail::backward(net, tape, dlogits, grads);
    }
    std::vector<GradientTensor> out(model.layers.size());
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const auto& l = model.layers[li];
        if (!l.weights) continue;
        out[li].values = std::move(grads.dw[li]);
        out[li].shape = l.weights->shape;
        for (double g : out[li].values) {
            if (!std::isfinite(g)) throw InvariantError("non-finite gradient in layer " + std::to_string(li));
        }
    }
    return out;
}

double mean_loss(const QuantizedModel& model, const Dataset& data) {
    if (data.empty()) throw EmptyInputError("cannot compute loss on an empty dataset");
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        total += detail::cross_entropy(forward_exit(model, data.row(i)), data.labels[i]);
    }
    return total / static_cast<double>(data.size());
}

}  // namespace fliplab
