#include "fliplab/io.hpp"

#include <fstream>
#include <sstream>

#include "fliplab/errors.hpp"

namespace fliplab {

namespace {

template <typename T>
T field(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

}  // namespace

Json model_to_json(const QuantizedModel& model) {
    Json layers = Json::array();
    for (const Layer& l : model.layers) {
        Json o;
        o["kind"] = to_string(l.tag);
        o["role"] = to_string(l.role);
        if (l.weights) {
            o["shape"] = l.weights->shape;
            o["scale"] = l.weights->scale;
            Json vals = Json::array();
            for (std::int8_t v : l.weights->values) vals.push_back(static_cast<int>(v));
            o["values"] = std::move(vals);
        }
        if (!l.bias.empty()) o["bias"] = l.bias;
        layers.push_back(std::move(o));
    }
    Json j;
    j["layers"] = std::move(layers);
    j["exits"] = model.exits;
    j["meta"] = {{"seed", model.meta.seed},
                 {"dataset_id", model.meta.dataset_id},
                 {"train_accuracy", model.meta.train_accuracy}};
    return j;
}

QuantizedModel model_from_json(const Json& j) {
    QuantizedModel m;
    const auto layers = field<std::vector<Json>>(j, "layers", "model");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Json& o = layers[i];
        const std::string where = "model layer " + std::to_string(i);
        Layer l;
        l.tag = parse_layer_tag(field<std::string>(o, "kind", where));
        l.role = o.contains("role") ? parse_role(field<std::string>(o, "role", where)) : Role::generic;
        if (o.contains("values")) {
            QuantizedTensor t;
            t.shape = field<std::vector<std::size_t>>(o, "shape", where);
            t.scale = field<double>(o, "scale", where);
            for (int v : field<std::vector<int>>(o, "values", where)) {
                if (v < -128 || v > 127) throw ConfigError(where + ": value " + std::to_string(v) + " is not int8");
                t.values.push_back(static_cast<std::int8_t>(v));
            }
            try {
                t.validate();
            } catch (const Error& e) {
                throw ConfigError(where + ": " + e.what());
            }
            l.weights = std::move(t);
        }
        if (o.contains("bias")) l.bias = field<std::vector<double>>(o, "bias", where);
        m.layers.push_back(std::move(l));
    }
    m.exits = field<std::vector<std::size_t>>(j, "exits", "model");
    if (j.contains("meta")) {
        const Json& meta = j.at("meta");
        if (meta.contains("seed")) m.meta.seed = field<std::uint64_t>(meta, "seed", "model meta");
        if (meta.contains("dataset_id")) m.meta.dataset_id = field<std::string>(meta, "dataset_id", "model meta");
        if (meta.contains("train_accuracy")) m.meta.train_accuracy = field<double>(meta, "train_accuracy", "model meta");
    }
    m.validate();
    return m;
}

Json flips_to_json(const BitFlipSet& flips) {
    Json a = Json::array();
    for (const auto& f : flips) a.push_back({{"layer", f.layer}, {"param", f.param}, {"bit", f.bit}});
    return a;
}

BitFlipSet flips_from_json(const Json& j) {
    if (!j.is_array()) throw ConfigError("flip set must be a JSON array");
    std::vector<BitAddress> out;
    for (const Json& o : j) {
        BitAddress a;
        a.layer = field<std::size_t>(o, "layer", "flip");
        a.param = field<std::size_t>(o, "param", "flip");
        a.bit = o.contains("bit") ? field<unsigned>(o, "bit", "flip") : kMsb;
        if (a.bit > 7) throw ConfigError("flip bit " + std::to_string(a.bit) + " outside 0..7");
        out.push_back(a);
    }
    return BitFlipSet(std::move(out));
}

Json profile_to_json(const SensitivityProfile& p) {
    Json entries = Json::array();
    for (const auto& e : p.entries) {
        entries.push_back({{"layer", e.layer}, {"acc", e.post_flip_accuracy}, {"k", e.subset.size()}, {"subset", e.subset}});
    }
    Json j;
    j["entries"] = std::move(entries);
    j["target_layer"] = p.target_layer;
    j["initial_candidates"] = p.initial_candidates;
    j["evaluations"] = p.evaluations;
    return j;
}

SensitivityProfile profile_from_json(const Json& j) {
    SensitivityProfile p;
    for (const Json& e : field<std::vector<Json>>(j, "entries", "profile")) {
        LayerProfileEntry le;
        le.layer = field<std::size_t>(e, "layer", "profile entry");
        le.post_flip_accuracy = field<double>(e, "acc", "profile entry");
        le.subset = field<std::vector<std::size_t>>(e, "subset", "profile entry");
        p.entries.push_back(std::move(le));
    }
    p.target_layer = field<std::size_t>(j, "target_layer", "profile");
    p.initial_candidates = field<std::vector<std::size_t>>(j, "initial_candidates", "profile");
    if (j.contains("evaluations")) p.evaluations = field<std::size_t>(j, "evaluations", "profile");
    return p;
}

Json signatures_to_json(const std::vector<LayerSignature>& sigs, const std::vector<ImportanceFactors>& imps, double m) {
    if (sigs.size() != imps.size()) throw DimensionError("signatures and importances differ in length");
    Json a = Json::array();
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        const auto& s = sigs[i];
        a.push_back({{"layer", s.layer},
                     {"mu", s.mean},
                     {"sigma", s.std},
                     {"q", {s.quartiles.q1, s.quartiles.median, s.quartiles.q3}},
                     {"rho", s.rho},
                     {"alpha_l", imps[i].alpha_l},
                     {"T_l", detection_threshold(s.std, imps[i].alpha_l, m)}});
    }
    return a;
}

std::vector<LayerSignature> signatures_from_json(const Json& j) {
    if (!j.is_array()) throw ConfigError("signatures must be a JSON array");
    std::vector<LayerSignature> out;
    for (const Json& o : j) {
        LayerSignature s;
        s.layer = field<std::size_t>(o, "layer", "signature");
        s.mean = field<double>(o, "mu", "signature");
        s.std = field<double>(o, "sigma", "signature");
        const auto q = field<std::vector<double>>(o, "q", "signature");
        if (q.size() != 3) throw ConfigError("signature quartiles need three values");
        s.quartiles = {q[0], q[1], q[2]};
        s.rho = field<std::vector<double>>(o, "rho", "signature");
        out.push_back(std::move(s));
    }
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path.string());
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

Json read_json(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

QuantizedModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

void save_model(const std::filesystem::path& path, const QuantizedModel& model) { write_json(path, model_to_json(model)); }

}  // namespace fliplab
