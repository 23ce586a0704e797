#include "float_net.hpp"

#include <algorithm>
#include <cmath>

#include "fliplab/errors.hpp"

namespace fliplab::detail {

Grads::Grads(const FloatNet& net) {
    for (const auto& l : net.layers) {
        dw.emplace_back(l.w.size(), 0.0);
        db.emplace_back(l.b.size(), 0.0);
    }
}

void Grads::clear() {
    for (auto& v : dw) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : db) std::fill(v.begin(), v.end(), 0.0);
}

FloatNet dequantize(const QuantizedModel& model) {
    FloatNet net;
    net.exits = model.exits;
    std::size_t width = model.input_dim();
    for (const auto& layer : model.layers) {
        FloatLayer fl;
        fl.tag = layer.tag;
        fl.role = layer.role;
        fl.in = width;
        fl.out = width;
        if (layer.weights) {
            fl.w = layer.weights->dequantize();
            if (layer.tag != LayerTag::layer_norm) fl.out = layer.weights->shape.at(0);
        }
        fl.b = layer.bias;
        if (layer.tag == LayerTag::dense) width = fl.out;
        net.layers.push_back(std::move(fl));
    }
    return net;
}

QuantizedModel quantize(const FloatNet& net) {
    QuantizedModel model;
    model.exits = net.exits;
    for (const auto& fl : net.layers) {
        Layer layer;
        layer.tag = fl.tag;
        layer.role = fl.role;
        layer.bias = fl.b;
        if (!fl.w.empty()) {
            std::vector<std::size_t> shape =
                fl.tag == LayerTag::layer_norm ? std::vector<std::size_t>{fl.in} : std::vector<std::size_t>{fl.out, fl.in};
            layer.weights = fliplab::quantize(fl.w, shape);
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

void forward(const FloatNet& net, std::span<const double> x, Tape& tape) {
    const std::size_t n = net.layers.size();
    tape.inputs.resize(n);
    tape.xhat.resize(n);
    tape.inv_std.resize(n);
    tape.logits.clear();
    std::vector<double> h(x.begin(), x.end());
    for (std::size_t li = 0; li < n; ++li) {
        const FloatLayer& l = net.layers[li];
        tape.inputs[li] = h;
        switch (l.tag) {
            case LayerTag::dense:
            case LayerTag::softmax_exit: {
                if (h.size() != l.in) throw DimensionError("layer input width mismatch");
                std::vector<double> y(l.out);
                for (std::size_t o = 0; o < l.out; ++o) {
                    const double* row = l.w.data() + o * l.in;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * h[i];
                    y[o] = acc + l.b[o];
                }
                if (l.tag == LayerTag::dense) {
                    h = std::move(y);
                } else {
                    tape.logits.push_back(std::move(y));
                }
                break;
            }
            case LayerTag::relu:
                for (double& v : h) v = std::max(v, 0.0);
                break;
            case LayerTag::layer_norm: {
                const double d = static_cast<double>(h.size());
                double mean = 0.0;
                for (double v : h) mean += v;
                mean /= d;
                double var = 0.0;
                for (double v : h) var += (v - mean) * (v - mean);
                var /= d;
                const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
                auto& xh = tape.xhat[li];
                xh.resize(h.size());
                for (std::size_t i = 0; i < h.size(); ++i) {
                    xh[i] = (h[i] - mean) * inv;
                    h[i] = l.w[i] * xh[i] + l.b[i];
                }
                tape.inv_std[li] = inv;
                break;
            }
        }
    }
}

void backward(const FloatNet& net, const Tape& tape, const std::vector<std::vector<double>>& dlogits,
              Grads& grads) {
    std::vector<double> dh;  // gradient w.r.t. the running activation
    std::size_t exit_no = net.exits.size();
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const FloatLayer& l = net.layers[li];
        const auto& x = tape.inputs[li];
        if (dh.empty()) dh.assign(x.size(), 0.0);
        switch (l.tag) {
            case LayerTag::softmax_exit: {
                --exit_no;
                const auto& g = dlogits.at(exit_no);
                if (g.empty()) break;
                auto& dw = grads.dw[li];
                for (std::size_t o = 0; o < l.out; ++o) {
                    if (g[o] == 0.0) continue;
                    const double* row = l.w.data() + o * l.in;
                    double* drow = dw.data() + o * l.in;
                    for (std::size_t i = 0; i < l.in; ++i) {
                        drow[i] += g[o] * x[i];
                        dh[i] += g[o] * row[i];
                    }
                    grads.db[li][o] += g[o];
                }
                break;
            }
            case LayerTag::dense: {
                std::vector<double> dx(l.in, 0.0);
                auto& dw = grads.dw[li];
                for (std::size_t o = 0; o < l.out; ++o) {
                    const double go = dh[o];
                    if (go == 0.0) continue;
                    const double* row = l.w.data() + o * l.in;
                    double* drow = dw.data() + o * l.in;
                    for (std::size_t i = 0; i < l.in; ++i) {
                        drow[i] += go * x[i];
                        dx[i] += go * row[i];
                    }
                    grads.db[li][o] += go;
                }
                dh = std::move(dx);
                break;
            }
            case LayerTag::relu:
                for (std::size_t i = 0; i < dh.size(); ++i) {
                    if (x[i] <= 0.0) dh[i] = 0.0;
                }
                break;
            case LayerTag::layer_norm: {
                const auto& xh = tape.xhat[li];
                const std::size_t d = xh.size();
                std::vector<double> dxh(d);
                double sum = 0.0;
                double sum_x = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    grads.dw[li][i] += dh[i] * xh[i];
                    grads.db[li][i] += dh[i];
                    dxh[i] = dh[i] * l.w[i];
                    sum += dxh[i];
                    sum_x += dxh[i] * xh[i];
                }
                const double inv = tape.inv_std[li];
                const double dd = static_cast<double>(d);
                for (std::size_t i = 0; i < d; ++i) dh[i] = inv * (dxh[i] - sum / dd - xh[i] * sum_x / dd);
                break;
            }
        }
    }
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label, double weight) {
    std::vector<double> p = softmax(logits);
    p.at(label) -= 1.0;
    for (double& v : p) v *= weight;
    return p;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    return std::log(z) + m - logits[label];
}

}  // namespace fliplab::detail
