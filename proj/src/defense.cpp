#include "fliplab/defense.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include "fliplab/errors.hpp"

namespace fliplab {

std::string_view to_string(DecodeStatus s) {
    switch (s) {
        case DecodeStatus::clean: return "clean";
        case DecodeStatus::corrected: return "corrected";
        case DecodeStatus::uncorrectable: return "uncorrectable";
    }
    return "?";
}

namespace {

// Hamming position (1..71) of each data bit: the non-powers of two, in order.
constexpr std::array<unsigned, 64> make_data_positions() {
    std::array<unsigned, 64> pos{};
    unsigned n = 0;
    for (unsigned p = 1; p < 72 && n < 64; ++p) {
        if ((p & (p - 1)) != 0) pos[n++] = p;
    }
    return pos;
}

constexpr auto kDataPos = make_data_positions();

unsigned syndrome_of_data(std::uint64_t word) {
    unsigned s = 0;
    for (unsigned i = 0; i < 64; ++i) {
        if ((word >> i) & 1U) s ^= kDataPos[i];
    }
    return s;
}

int data_bit_at(unsigned position) {
    for (unsigned i = 0; i < 64; ++i) {
        if (kDataPos[i] == position) return static_cast<int>(i);
    }
    return -1;
}

}  // namespace

SecdedWord secded_encode(std::uint64_t word) {
    // Check bits 0..6 hold the Hamming parities so that the XOR of the
    // positions of all set bits is zero; bit 7 makes total parity even.
    const unsigned hamming = syndrome_of_data(word) & 0x7FU;
    const unsigned ones = static_cast<unsigned>(std::popcount(word)) + static_cast<unsigned>(std::popcount(hamming));
    SecdedWord cw;
    cw.data = word;
    cw.check = static_cast<std::uint8_t>(hamming | ((ones & 1U) << 7));
    return cw;
}

DecodeResult secded_decode(const SecdedWord& cw) {
    const unsigned syndrome = syndrome_of_data(cw.data) ^ (cw.check & 0x7FU);
    const unsigned parity =
        (static_cast<unsigned>(std::popcount(cw.data)) + static_cast<unsigned>(std::popcount(cw.check))) & 1U;
    DecodeResult r;
    r.word = cw.data;
    if (syndrome == 0 && parity == 0) return r;
    if (parity == 0) {
        r.status = DecodeStatus::uncorrectable;
        return r;
    }
    // Odd parity: a single error at `syndrome` (0 = the overall parity bit).
    if (syndrome >= 72) {
        r.status = DecodeStatus::uncorrectable;
        return r;
    }
    const int bit = data_bit_at(syndrome);
    if (bit >= 0) r.word ^= std::uint64_t{1} << bit;
    r.status = DecodeStatus::corrected;
    return r;
}

SecdedWord flip_codeword_bit(SecdedWord cw, unsigned position) {
    if (position >= kCodewordBits) throw AddressError("codeword bit " + std::to_string(position) + " out of range");
    if (position < 64) {
        cw.data ^= std::uint64_t{1} << position;
    } else {
        cw.check = static_cast<std::uint8_t>(cw.check ^ (1U << (position - 64)));
    }
    return cw;
}

ProtectedApply protect_and_apply(const QuantizedModel& model, const BitFlipSet& flips,
                                 const ProtectionPredicate& is_protected) {
    check_addresses(model, flips);
    std::map<WordAddress, std::vector<BitAddress>> by_word;
    for (const auto& a : flips) by_word[{a.layer, a.param / 8}].push_back(a);

    ProtectedApply out{model, {}};
    for (const auto& [addr, bits] : by_word) {
        auto& values = out.model.layers[addr.layer].weights->values;
        const std::size_t base = addr.word * 8;
        std::uint64_t word = 0;
        for (std::size_t b = 0; b < 8 && base + b < values.size(); ++b) {
            word |= std::uint64_t{static_cast<std::uint8_t>(values[base + b])} << (8 * b);
        }
        WordStatus st;
        st.address = addr;
        st.flips = bits.size();
        st.is_protected = is_protected && is_protected(addr);

        std::uint64_t stored = word;
        if (st.is_protected) {
            SecdedWord cw = secded_encode(word);
            for (const auto& a : bits) cw = flip_codeword_bit(cw, static_cast<unsigned>((a.param - base) * 8 + a.bit));
            const DecodeResult dec = secded_decode(cw);
            st.status = dec.status;
            stored = dec.word;
        } else {
            for (const auto& a : bits) stored ^= std::uint64_t{1} << ((a.param - base) * 8 + a.bit);
        }
        for (std::size_t b = 0; b < 8 && base + b < values.size(); ++b) {
            values[base + b] = static_cast<std::int8_t>(static_cast<std::uint8_t>((stored >> (8 * b)) & 0xFFU));
        }
        out.words.push_back(st);
    }
    return out;
}

void DetectionParams::validate() const {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("m must be a finite value >= 0");
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
        throw ConfigError("confidence_threshold must lie in [0,1]");
    }
    if (blocks == 0) throw ConfigError("blocks must be at least 1");
}

Quartiles quartiles_of(std::vector<double> values) {
    if (values.empty()) throw EmptyInputError("quartiles of an empty sequence");
    std::sort(values.begin(), values.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] + frac * (values[hi] - values[lo]);
    };
    return {at(0.25), at(0.5), at(0.75)};
}

std::vector<double> block_zero_fractions(std::span<const std::int8_t> values, std::size_t blocks) {
    if (blocks == 0) throw ParameterError("blocks must be at least 1");
    if (values.empty()) return {};
    const std::size_t size = (values.size() + blocks - 1) / blocks;
    std::vector<double> rho;
    for (std::size_t start = 0; start < values.size(); start += size) {
        const std::size_t end = std::min(values.size(), start + size);
        const auto zeros = std::count(values.begin() + static_cast<std::ptrdiff_t>(start),
                                      values.begin() + static_cast<std::ptrdiff_t>(end), std::int8_t{0});
        rho.push_back(static_cast<double>(zeros) / static_cast<double>(end - start));
    }
    return rho;
}

std::vector<LayerSignature> build_signatures(const QuantizedModel& model, std::size_t blocks) {
    if (blocks == 0) throw ParameterError("blocks must be at least 1");
    std::vector<LayerSignature> out;
    for (std::size_t li : model.weighted_layers()) {
        const QuantizedTensor& t = *model.layers[li].weights;
        const std::vector<double> w = t.dequantize();
        LayerSignature s;
        s.layer = li;
        const double n = static_cast<double>(w.size());
        s.mean = std::accumulate(w.begin(), w.end(), 0.0) / n;
        double var = 0.0;
        for (double x : w) var += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(var / n);
        s.quartiles = quartiles_of(w);
        s.rho = block_zero_fractions(t.values, blocks);
        out.push_back(std::move(s));
    }
    return out;
}

ImportanceFactors layer_importance(std::size_t layer_index, std::size_t total, LayerTag tag, Role role) {
    if (total == 0 || layer_index < 1 || layer_index > total) {
        throw ParameterError("layer index " + std::to_string(layer_index) + " outside [1," + std::to_string(total) + "]");
    }
    ImportanceFactors f;
    f.beta_p = 1.0 - static_cast<double>(layer_index - 1) / static_cast<double>(total);
    if (tag == LayerTag::dense) {
        const bool attention = role == Role::attn_q || role == Role::attn_k || role == Role::attn_v || role == Role::attn_o;
        const bool feature = role == Role::generic || role == Role::ffn;
        f.gamma_s = attention ? 1.0 : feature ? 0.8 : 0.2;
    } else if (tag == LayerTag::layer_norm) {
        f.gamma_s = 0.6;
    } else {
        f.gamma_s = 0.2;
    }
    f.alpha_l = f.beta_p * f.gamma_s;
    return f;
}

ImportanceFactors layer_importance(std::size_t layer_index, std::size_t total, const Layer& kind) {
    return layer_importance(layer_index, total, kind.tag, kind.role);
}

std::vector<ImportanceFactors> model_importances(const QuantizedModel& model) {
    std::vector<ImportanceFactors> out;
    for (std::size_t li : model.weighted_layers()) {
        out.push_back(layer_importance(li + 1, model.layers.size(), model.layers[li]));
    }
    return out;
}

double detection_threshold(double sigma, double alpha_l, double m) {
    if (!(sigma >= 0.0)) throw ParameterError("sigma must be >= 0");
    return (m + alpha_l) * sigma;
}

double pattern_score(std::span<const double> rho_ref, std::span<const double> rho_cur) {
    if (rho_ref.size() != rho_cur.size()) {
        throw DimensionError("sparsity vectors differ in length (" + std::to_string(rho_ref.size()) + " vs " +
                             std::to_string(rho_cur.size()) + ")");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < rho_ref.size(); ++i) s += std::abs(rho_ref[i] - rho_cur[i]);
    return s;
}

double nearest_valid(double w, const Quartiles& q) {
    std::array<double, 3> c{q.q1, q.median, q.q3};
    std::sort(c.begin(), c.end());
    double best = c[0];
    for (double v : c) {
        if (std::abs(w - v) < std::abs(w - best)) best = v;
    }
    return best;
}

namespace {

void check_coverage(const QuantizedModel& model, const std::vector<LayerSignature>& signatures,
                    const std::vector<ImportanceFactors>& importances) {
    const auto weighted = model.weighted_layers();
    if (signatures.size() != weighted.size() || importances.size() != weighted.size()) {
        throw ConfigError("signatures/importances must cover every weighted layer (" + std::to_string(weighted.size()) +
                          " layers)");
    }
    for (std::size_t i = 0; i < weighted.size(); ++i) {
        if (signatures[i].layer != weighted[i]) {
            throw ConfigError("missing signature for layer " + std::to_string(weighted[i]));
        }
    }
}

}  // namespace

std::vector<LayerCheck> epsilon_scan_and_correct(QuantizedModel& model, const std::vector<LayerSignature>& signatures,
                                                 const std::vector<ImportanceFactors>& importances,
                                                 const DetectionParams& params) {
    params.validate();
    check_coverage(model, signatures, importances);
    std::vector<LayerCheck> checks;
    for (std::size_t i = 0; i < signatures.size(); ++i) {
        const LayerSignature& sig = signatures[i];
        QuantizedTensor& t = *model.layers[sig.layer].weights;
        LayerCheck c;
        c.layer = sig.layer;
        c.score = pattern_score(sig.rho, block_zero_fractions(t.values, params.blocks));
        c.threshold = detection_threshold(sig.std, importances[i].alpha_l, params.m);
        c.flagged = c.score > c.threshold;
        if (c.flagged) {
            for (auto& q : t.values) {
                const double w = static_cast<double>(q) * t.scale;
                if (std::abs(w - sig.mean) <= c.threshold) continue;
                const double v = std::round(nearest_valid(w, sig.quartiles) / t.scale);
                q = static_cast<std::int8_t>(std::clamp(v, -127.0, 127.0));
                ++c.corrected_weights;
            }
        }
        checks.push_back(c);
    }
    return checks;
}

namespace {

// Stage 1 over precomputed exit logits; returns the exit taken, if any.
std::optional<std::size_t> confidence_gate(const std::vector<std::vector<double>>& logits, double threshold,
                                           std::vector<double>& confidences) {
    for (std::size_t e = 0; e < logits.size(); ++e) {
        const auto p = softmax(logits[e]);
        const double conf = *std::max_element(p.begin(), p.end());
        confidences.push_back(conf);
        if (conf > threshold) return e;
    }
    return std::nullopt;
}

}  // namespace

EpsilonVerdict epsilon_infer(const QuantizedModel& model, const std::vector<LayerSignature>& signatures,
                             const std::vector<ImportanceFactors>& importances, const DetectionParams& params,
                             std::span<const double> x) {
    params.validate();
    check_coverage(model, signatures, importances);
    EpsilonVerdict v;
    const auto logits = forward(model, x);
    v.exit_taken = confidence_gate(logits, params.confidence_threshold, v.confidences);
    if (v.exit_taken) {
        v.label = argmax(logits[*v.exit_taken]);
        return v;
    }
    QuantizedModel work = model;
    for (const auto& c : epsilon_scan_and_correct(work, signatures, importances, params)) {
        if (c.flagged) {
            v.fault_detected = true;
            v.corrected_layers.push_back(c.layer);
        }
    }
    v.label = argmax(forward_exit(work, x));
    return v;
}

EpsilonSummary epsilon_evaluate(const QuantizedModel& model, const std::vector<LayerSignature>& signatures,
                                const std::vector<ImportanceFactors>& importances, const DetectionParams& params,
                                const Dataset& data) {
    params.validate();
    check_coverage(model, signatures, importances);
    if (data.empty()) throw EmptyInputError("cannot evaluate on an empty dataset");
    EpsilonSummary out;
    std::optional<QuantizedModel> corrected;
    bool flagged = false;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto logits = forward(model, data.row(i));
        std::vector<double> conf;
        std::size_t label = 0;
        if (const auto e = confidence_gate(logits, params.confidence_threshold, conf)) {
            ++out.early_exits;
            label = argmax(logits[*e]);
        } else {
            if (!corrected) {
                corrected = model;
                out.checks = epsilon_scan_and_correct(*corrected, signatures, importances, params);
                flagged = std::any_of(out.checks.begin(), out.checks.end(), [](const auto& c) { return c.flagged; });
            }
            ++out.stage2_runs;
            if (flagged) ++out.detections;
            label = argmax(forward_exit(*corrected, data.row(i)));
        }
        if (label == data.labels[i]) ++hits;
    }
    out.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
    return out;
}

double missed_detection_bound(double alpha_l, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw ParameterError("fault rate p must lie in (0,1]");
    return std::exp(-alpha_l * alpha_l / (2.0 * p));
}

double error_bound(double confidence_threshold, std::size_t num_exits, double alpha_l, double p) {
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
        throw ParameterError("confidence threshold must lie in [0,1]");
    }
    return std::pow(1.0 - confidence_threshold, static_cast<double>(num_exits)) + missed_detection_bound(alpha_l, p);
}

}  // namespace fliplab
