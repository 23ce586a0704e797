#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "fliplab/model.hpp"

namespace fliplab {

inline constexpr unsigned kMsb = 7;

/// A single bit of stored weight memory: layer index into QuantizedModel::layers,
/// flat weight index within that layer's tensor, bit 0..7 (7 = MSB).
struct BitAddress {
    std::size_t layer = 0;
    std::size_t param = 0;
    unsigned bit = kMsb;

    auto operator<=>(const BitAddress&) const = default;
};

/// Canonical (sorted, duplicate-free) set of bit addresses.
class BitFlipSet {
  public:
    BitFlipSet() = default;
    BitFlipSet(std::initializer_list<BitAddress> addrs);
    explicit BitFlipSet(std::vector<BitAddress> addrs);

    /// MSB flips of `params` in `layer`.
    static BitFlipSet msb(std::size_t layer, std::span<const std::size_t> params);

    const std::vector<BitAddress>& addresses() const { return addrs_; }
    std::size_t size() const { return addrs_.size(); }
    bool empty() const { return addrs_.empty(); }
    auto begin() const { return addrs_.begin(); }
    auto end() const { return addrs_.end(); }

    void insert(BitAddress a);
    bool contains(const BitAddress& a) const;

    auto operator<=>(const BitFlipSet&) const = default;

  private:
    std::vector<BitAddress> addrs_;
};

/// Original bytes of one layer, captured before perturbation.
struct WeightSnapshot {
    std::size_t layer = 0;
    std::vector<std::int8_t> values;
};

/// XOR each selected byte with 0x80. Scale is untouched.
QuantizedTensor flip_msb(const QuantizedTensor& tensor, std::span<const std::size_t> indices);

/// XOR the given bit of one stored byte.
std::int8_t flip_bit(std::int8_t value, unsigned bit);

/// Throws AddressError unless every address points into a weight tensor.
void check_addresses(const QuantizedModel& model, const BitFlipSet& flips);

/// Perturbed copy of `model` and one snapshot per touched layer, ascending.
std::pair<QuantizedModel, std::vector<WeightSnapshot>> apply_flipset(const QuantizedModel& model,
                                                                     const BitFlipSet& flips);

/// In-place variant used on hot paths; returns the snapshots.
std::vector<WeightSnapshot> apply_flipset_inplace(QuantizedModel& model, const BitFlipSet& flips);

QuantizedModel restore(QuantizedModel model, std::span<const WeightSnapshot> snapshots);
void restore_inplace(QuantizedModel& model, std::span<const WeightSnapshot> snapshots);

/// Applies `flips` to `model`, evaluates `fn(model)`, then restores the
/// original bytes even if `fn` throws.
template <typename Fn>
auto with_flips(QuantizedModel& model, const BitFlipSet& flips, Fn&& fn) {
    auto snaps = apply_flipset_inplace(model, flips);
    struct Guard {
        QuantizedModel& m;
        std::vector<WeightSnapshot>& s;
        ~Guard() { restore_inplace(m, s); }
    } guard{model, snaps};
    return fn(static_cast<const QuantizedModel&>(model));
}

}  // namespace fliplab
