#include "fliplab/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "fliplab/errors.hpp"
#include "fliplab/rng.hpp"

namespace fliplab {

void Dataset::validate() const {
    if (num_classes < 2) throw ConfigError("dataset needs at least two classes");
    if (inputs.size() != labels.size() * dim) throw DimensionError("dataset row count does not match label count");
    for (std::size_t y : labels) {
        if (y >= num_classes) throw ConfigError("label " + std::to_string(y) + " out of range");
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.dim = dim;
    out.num_classes = num_classes;
    out.id = id + "/subset";
    out.inputs.reserve(indices.size() * dim);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) throw DimensionError("subset index out of range");
        auto r = row(i);
        out.inputs.insert(out.inputs.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

namespace {

std::vector<std::vector<double>> blob_centres(const BlobParams& shape) {
    if (shape.classes < 2) throw ParameterError("need at least two classes");
    if (shape.dim == 0) throw ParameterError("dim must be positive");
    if (shape.dim < 63 && shape.classes > (std::size_t{1} << shape.dim)) {
        throw ParameterError("more classes than hypercube vertices");
    }
    Rng rng = stage_rng(shape.seed, "blob-centres");
    std::vector<std::vector<double>> centres;
    while (centres.size() < shape.classes) {
        std::vector<double> c(shape.dim);
        for (double& v : c) v = (rng() & 1U) ? 1.0 : -1.0;
        if (std::find(centres.begin(), centres.end(), c) == centres.end()) centres.push_back(std::move(c));
    }
    return centres;
}

}  // namespace

Dataset make_blobs_split(const BlobParams& shape, std::uint64_t sample_seed, std::size_t samples) {
    if (shape.noise < 0.0) throw ParameterError("noise must be non-negative");
    const auto centres = blob_centres(shape);
    Rng rng = stage_rng(sample_seed, "blob-samples");
    std::normal_distribution<double> gauss(0.0, 1.0);

    Dataset d;
    d.dim = shape.dim;
    d.num_classes = shape.classes;
    std::ostringstream id;
    id << "blobs-c" << shape.classes << "-d" << shape.dim << "-noise" << shape.noise << "-centres" << shape.seed
       << "-samples" << sample_seed << "x" << samples;
    d.id = id.str();
    d.inputs.reserve(samples * shape.dim);
    d.labels.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const std::size_t label = i % shape.classes;
        for (std::size_t j = 0; j < shape.dim; ++j) d.inputs.push_back(centres[label][j] + shape.noise * gauss(rng));
        d.labels.push_back(label);
    }
    return d;
}

Dataset make_blobs(const BlobParams& shape) { return make_blobs_split(shape, shape.seed, shape.samples); }

void write_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (std::size_t j = 0; j < data.dim; ++j) out << 'f' << j << ',';
    out << "label\n";
    out.precision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.row(i)) out << v << ',';
        out << data.labels[i] << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_csv(const std::filesystem::path& path, std::size_t num_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw EmptyInputError("empty csv: " + path.string());
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 2) throw ConfigError("csv needs at least one feature and a label: " + path.string());

    Dataset d;
    d.dim = columns - 1;
    d.id = path.filename().string();
    std::size_t max_label = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (col < d.dim) {
                    d.inputs.push_back(std::stod(cell));
                } else {
                    const auto y = static_cast<std::size_t>(std::stoul(cell));
                    d.labels.push_back(y);
                    max_label = std::max(max_label, y);
                }
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad cell '" + cell + "'");
            }
            ++col;
        }
        if (col != columns) throw DimensionError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    }
    d.num_classes = num_classes ? num_classes : std::max<std::size_t>(2, max_label + 1);
    d.validate();
    return d;
}

}  // namespace fliplab
