#include "fliplab/fault.hpp"

#include <algorithm>

#include "fliplab/errors.hpp"

namespace fliplab {

BitFlipSet::BitFlipSet(std::initializer_list<BitAddress> addrs) : BitFlipSet(std::vector<BitAddress>(addrs)) {}

BitFlipSet::BitFlipSet(std::vector<BitAddress> addrs) : addrs_(std::move(addrs)) {
    for (const auto& a : addrs_) {
        if (a.bit > 7) throw AddressError("bit position " + std::to_string(a.bit) + " exceeds 7");
    }
    std::sort(addrs_.begin(), addrs_.end());
    addrs_.erase(std::unique(addrs_.begin(), addrs_.end()), addrs_.end());
}

BitFlipSet BitFlipSet::msb(std::size_t layer, std::span<const std::size_t> params) {
    std::vector<BitAddress> v;
    v.reserve(params.size());
    for (std::size_t p : params) v.push_back({layer, p, kMsb});
    return BitFlipSet(std::move(v));
}

void BitFlipSet::insert(BitAddress a) {
    if (a.bit > 7) throw AddressError("bit position " + std::to_string(a.bit) + " exceeds 7");
    auto it = std::lower_bound(addrs_.begin(), addrs_.end(), a);
    if (it == addrs_.end() || *it != a) addrs_.insert(it, a);
}

bool BitFlipSet::contains(const BitAddress& a) const { return std::binary_search(addrs_.begin(), addrs_.end(), a); }

std::int8_t flip_bit(std::int8_t value, unsigned bit) {
    if (bit > 7) throw AddressError("bit position " + std::to_string(bit) + " exceeds 7");
    const auto byte = static_cast<std::uint8_t>(value);
    return static_cast<std::int8_t>(static_cast<std::uint8_t>(byte ^ (1U << bit)));
}

QuantizedTensor flip_msb(const QuantizedTensor& tensor, std::span<const std::size_t> indices) {
    QuantizedTensor out = tensor;
    for (std::size_t i : indices) {
        if (i >= out.values.size()) {
            throw AddressError("weight index " + std::to_string(i) + " out of range (" +
                               std::to_string(out.values.size()) + " weights)");
        }
    }
    for (std::size_t i : indices) out.values[i] = flip_bit(out.values[i], kMsb);
    return out;
}

void check_addresses(const QuantizedModel& model, const BitFlipSet& flips) {
    for (const auto& a : flips) {
        if (a.layer >= model.layers.size()) throw AddressError("layer " + std::to_string(a.layer) + " out of range");
        const auto& w = model.layers[a.layer].weights;
        if (!w) throw AddressError("layer " + std::to_string(a.layer) + " has no weights");
        if (a.param >= w->size()) {
            throw AddressError("weight index " + std::to_string(a.param) + " out of range in layer " +
                               std::to_string(a.layer));
        }
    }
}

std::vector<WeightSnapshot> apply_flipset_inplace(QuantizedModel& model, const BitFlipSet& flips) {
    check_addresses(model, flips);
    std::vector<WeightSnapshot> snaps;
    for (const auto& a : flips) {
        auto& values = model.layers[a.layer].weights->values;
        if (snaps.empty() || snaps.back().layer != a.layer) snaps.push_back({a.layer, values});
        values[a.param] = flip_bit(values[a.param], a.bit);
    }
    return snaps;
}

std::pair<QuantizedModel, std::vector<WeightSnapshot>> apply_flipset(const QuantizedModel& model,
                                                                     const BitFlipSet& flips) {
    QuantizedModel out = model;
    auto snaps = apply_flipset_inplace(out, flips);
    return {std::move(out), std::move(snaps)};
}

void restore_inplace(QuantizedModel& model, std::span<const WeightSnapshot> snapshots) {
    for (const auto& s : snapshots) {
        if (s.layer >= model.layers.size() || !model.layers[s.layer].weights ||
            model.layers[s.layer].weights->values.size() != s.values.size()) {
            throw LineageError("snapshot for layer " + std::to_string(s.layer) + " does not fit this model");
        }
    }
    for (const auto& s : snapshots) model.layers[s.layer].weights->values = s.values;
}

QuantizedModel restore(QuantizedModel model, std::span<const WeightSnapshot> snapshots) {
    restore_inplace(model, snapshots);
    return model;
}

}  // namespace fliplab
