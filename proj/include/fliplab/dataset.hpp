#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fliplab {

/// Row-major feature matrix with integer class labels.
struct Dataset {
    std::vector<double> inputs;
    std::vector<std::size_t> labels;
    std::size_t dim = 0;
    std::size_t num_classes = 2;
    std::string id;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::span<const double> row(std::size_t i) const { return {inputs.data() + i * dim, dim}; }

    void validate() const;
    /// Rows at `indices`, in the given order.
    Dataset subset(std::span<const std::size_t> indices) const;
};

struct BlobParams {
    std::uint64_t seed = 0;
    std::size_t classes = 4;
    std::size_t samples = 1000;
    std::size_t dim = 8;
    double noise = 1.0;
};

/// Gaussian blobs centred on distinct vertices of the {-1,+1}^dim hypercube.
/// Class centres depend only on (seed, classes, dim); samples are balanced
/// round-robin across classes.
Dataset make_blobs(const BlobParams& shape);

/// Draws samples around the same class centres as `make_blobs(centres_from)`
/// but with an independent sample stream. Used for train/eval splits.
Dataset make_blobs_split(const BlobParams& centres_from, std::uint64_t sample_seed, std::size_t samples);

/// CSV with header f0..f{d-1},label.
void write_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_csv(const std::filesystem::path& path, std::size_t num_classes = 0);

}  // namespace fliplab
