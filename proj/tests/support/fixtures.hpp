#pragma once

#include <filesystem>
#include <string>

#include "fliplab/dataset.hpp"
#include "fliplab/io.hpp"
#include "fliplab/model.hpp"
#include "fliplab/train.hpp"

namespace fixtures {

/// Small multi-exit model with every layer kind: 4 inputs, 3 classes.
inline fliplab::QuantizedModel small_model(const fliplab::Dataset& data, std::uint64_t seed = 3) {
    using namespace fliplab;
    TrainConfig cfg;
    cfg.arch = {{LayerTag::dense, Role::attn_q, 8}, {LayerTag::relu, Role::generic, 0},
                {LayerTag::softmax_exit, Role::generic, 0}, {LayerTag::dense, Role::ffn, 8},
                {LayerTag::layer_norm, Role::norm, 0}, {LayerTag::relu, Role::generic, 0},
                {LayerTag::softmax_exit, Role::generic, 0}};
    cfg.epochs = 15;
    return train_reference(cfg, data, seed);
}

inline fliplab::Dataset small_data(std::uint64_t seed = 3, std::size_t samples = 240) {
    return fliplab::make_blobs({seed, 3, samples, 4, 0.6});
}

/// A campaign small enough to run in a couple of seconds.
inline fliplab::Json tiny_campaign_json() {
    return fliplab::Json::parse(R"({
      "data": {"seed": 3, "classes": 3, "samples": 300, "dim": 4, "noise": 0.6, "eval_samples": 150},
      "train": {"arch": [{"kind": "dense", "role": "attn_q", "units": 8}, {"kind": "relu"}, {"kind": "softmax_exit"},
                         {"kind": "dense", "role": "ffn", "units": 8}, {"kind": "layer_norm", "role": "norm"},
                         {"kind": "relu"}, {"kind": "softmax_exit"}],
                "epochs": 15, "prune_fraction": 0.0, "finetune_epochs": 0, "seed": 3},
      "profile": {"alpha": 0.5, "rate_percent": 25},
      "rl": {"episodes": 30, "tau": 0.5},
      "baselines": {"methods": ["random_flips", "gradient_greedy", "greedy_selection", "random_search"],
                    "random_multiplier": 2, "budget": 8, "trials": 20},
      "defenses": {"ecc": ["all", "flipset", "none"], "epsilon": {"enabled": true, "m": 3, "blocks": 16}},
      "seeds": [2, 1],
      "workers": 1
    })");
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("fliplab_test_" + name)) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace fixtures
