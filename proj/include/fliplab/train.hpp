#pragma once

#include <cstdint>
#include <vector>

#include "fliplab/dataset.hpp"
#include "fliplab/model.hpp"

namespace fliplab {

/// One entry of an architecture description. `units` is only read for dense
/// layers; exits always project to the dataset's class count.
struct LayerSpec {
    LayerTag tag = LayerTag::dense;
    Role role = Role::generic;
    std::size_t units = 0;
};

struct TrainConfig {
    std::vector<LayerSpec> arch;
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    double learning_rate = 0.01;  // Adam step size
    double weight_decay = 0.0;
    /// Fraction of dense (and, with prune_exits, exit) weights zeroed by magnitude after training,
    /// followed by `finetune_epochs` of masked training. 0 disables pruning.
    double prune_fraction = 0.0;
    std::size_t finetune_epochs = 0;
    bool prune_exits = false;
    /// Quantized-model training accuracy below this raises TrainingFailure.
    double accuracy_floor = 0.5;
};

/// The reference architecture used throughout the test-suite and campaigns:
/// two 64-unit role-tagged projections, a layer norm and an intermediate exit.
std::vector<LayerSpec> desk_arch(std::size_t hidden = 64);

/// Trains a full-precision network with Adam on summed exit cross-entropy,
/// then quantizes every weight tensor to int8. Deterministic in (cfg, data, seed).
QuantizedModel train_reference(const TrainConfig& cfg, const Dataset& data, std::uint64_t seed);

}  // namespace fliplab
