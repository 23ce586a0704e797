#include "fliplab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>
#include <sstream>

#include "fliplab/errors.hpp"
#include "fliplab/evaluator.hpp"

namespace fliplab {

namespace {

// Reads keys from one config object and rejects any it did not consume.
class Block {
  public:
    Block(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <typename T>
    void read(const char* key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    const Json& sub(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
        }
    }

  private:
    const Json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

Json arch_to_json(const std::vector<LayerSpec>& arch) {
    Json a = Json::array();
    for (const auto& s : arch) {
        Json o{{"kind", to_string(s.tag)}, {"role", to_string(s.role)}};
        if (s.tag == LayerTag::dense) o["units"] = s.units;
        a.push_back(std::move(o));
    }
    return a;
}

std::vector<LayerSpec> arch_from_json(const Json& j, std::size_t hidden) {
    if (j.is_string()) {
        if (j.get<std::string>() == "desk") return desk_arch(hidden);
        throw ConfigError("train.arch: unknown preset '" + j.get<std::string>() + "'");
    }
    if (!j.is_array()) throw ConfigError("train.arch must be \"desk\" or a list of layers");
    std::vector<LayerSpec> arch;
    for (const Json& o : j) {
        Block b(o, "train.arch[]");
        std::string kind, role = "generic";
        LayerSpec s;
        b.read("kind", kind);
        b.read("role", role);
        b.read("units", s.units);
        b.finish();
        s.tag = parse_layer_tag(kind);
        s.role = parse_role(role);
        arch.push_back(s);
    }
    return arch;
}

double wall_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ProfileConfig seeded_profile(const CampaignConfig& cfg, std::uint64_t seed) {
    ProfileConfig p = cfg.profile;
    p.eval_subset_seed = seed;
    return p;
}

RlConfig seeded_rl(const CampaignConfig& cfg, std::uint64_t seed) {
    RlConfig r = cfg.rl;
    r.rng_seed = seed;
    return r;
}

}  // namespace

DataSplits load_or_generate(const DataConfig& cfg) {
    DataSplits out;
    if (cfg.train_file.has_value() != cfg.eval_file.has_value()) {
        throw ConfigError("data.train_file and data.eval_file must be given together");
    }
    if (cfg.train_file) {
        out.train = read_csv(*cfg.train_file);
        out.eval = read_csv(*cfg.eval_file, out.train.num_classes);
        return out;
    }
    out.train = make_blobs_split(cfg.blobs, cfg.blobs.seed * 100 + 1, cfg.blobs.samples);
    out.eval = make_blobs_split(cfg.blobs, cfg.blobs.seed * 100 + 2, cfg.eval_samples);
    return out;
}

void CampaignConfig::validate() const {
    if (seeds.empty()) throw ConfigError("campaign needs at least one seed");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw ConfigError("campaign seeds must be distinct");
    }
    if (workers == 0) throw ConfigError("workers must be at least 1");
    if (model_file && !std::filesystem::exists(*model_file)) {
        throw ConfigError("model file " + model_file->string() + " does not exist");
    }
    for (const auto* f : {&data.train_file, &data.eval_file}) {
        if (*f && !std::filesystem::exists(**f)) throw ConfigError("data file " + (*f)->string() + " does not exist");
    }
    if (!model_file && train.arch.empty()) throw ConfigError("either model_file or train.arch is required");
    if (data.blobs.classes < 2 || data.blobs.dim == 0 || data.blobs.samples == 0 || data.eval_samples == 0) {
        throw ConfigError("data generator needs >= 2 classes and nonzero dim/samples");
    }
    profile.validate();
    rl.validate();
    if (baselines.random_multiplier == 0 || baselines.budget == 0 || baselines.trials == 0) {
        throw ConfigError("baseline multiplier, budget and trials must be positive");
    }
    for (const auto& m : defenses.ecc) {
        if (m != "all" && m != "flipset" && m != "none") throw ConfigError("unknown ecc protection mode '" + m + "'");
    }
    if (defenses.epsilon.enabled) defenses.epsilon.params.validate();
}

CampaignConfig campaign_config_from_json(const Json& j) {
    CampaignConfig cfg;
    Block top(j, "config");

    if (top.has("data")) {
        Block b(top.sub("data"), "data");
        std::string train_file, eval_file;
        b.read("train_file", train_file);
        b.read("eval_file", eval_file);
        if (!train_file.empty()) cfg.data.train_file = train_file;
        if (!eval_file.empty()) cfg.data.eval_file = eval_file;
        b.read("seed", cfg.data.blobs.seed);
        b.read("classes", cfg.data.blobs.classes);
        b.read("samples", cfg.data.blobs.samples);
        b.read("dim", cfg.data.blobs.dim);
        b.read("noise", cfg.data.blobs.noise);
        b.read("eval_samples", cfg.data.eval_samples);
        b.finish();
    }
    std::string model_file;
    top.read("model_file", model_file);
    if (!model_file.empty()) cfg.model_file = model_file;

    cfg.train.arch = desk_arch();
    cfg.train.epochs = 20;
    cfg.train.prune_fraction = 0.95;
    cfg.train.finetune_epochs = 15;
    if (top.has("train")) {
        Block b(top.sub("train"), "train");
        std::size_t hidden = 64;
        b.read("hidden", hidden);
        if (b.has("arch")) cfg.train.arch = arch_from_json(b.sub("arch"), hidden);
        else cfg.train.arch = desk_arch(hidden);
        b.read("epochs", cfg.train.epochs);
        b.read("batch_size", cfg.train.batch_size);
        b.read("learning_rate", cfg.train.learning_rate);
        b.read("weight_decay", cfg.train.weight_decay);
        b.read("prune_fraction", cfg.train.prune_fraction);
        b.read("finetune_epochs", cfg.train.finetune_epochs);
        b.read("prune_exits", cfg.train.prune_exits);
        b.read("accuracy_floor", cfg.train.accuracy_floor);
        b.read("seed", cfg.model_seed);
        b.finish();
    }
    if (top.has("profile")) {
        Block b(top.sub("profile"), "profile");
        b.read("alpha", cfg.profile.alpha);
        b.read("rate_percent", cfg.profile.rate_percent);
        b.read("gradient_samples", cfg.profile.gradient_samples);
        b.finish();
    }
    if (top.has("rl")) {
        Block b(top.sub("rl"), "rl");
        std::string transition = "ranked", objective = "attacker", extraction = "smallest_feasible";
        b.read("episodes", cfg.rl.episodes);
        b.read("epsilon", cfg.rl.epsilon);
        b.read("learn_rate", cfg.rl.learn_rate);
        b.read("discount", cfg.rl.discount);
        b.read("tau", cfg.rl.failure_threshold);
        b.read("early_stop", cfg.rl.early_stop);
        b.read("transition", transition);
        b.read("objective", objective);
        b.read("extraction", extraction);
        if (b.has("tie_order")) {
            std::vector<std::string> order;
            b.read("tie_order", order);
            if (order.size() != 3) throw ConfigError("rl.tie_order must list three actions");
            for (std::size_t i = 0; i < 3; ++i) cfg.rl.tie_order[i] = parse_action(order[i]);
        }
        b.finish();
        cfg.rl.transition = parse_transition_mode(transition);
        cfg.rl.objective = parse_objective(objective);
        cfg.rl.extraction = parse_extraction(extraction);
    }
    if (top.has("baselines")) {
        Block b(top.sub("baselines"), "baselines");
        std::vector<std::string> methods;
        std::string bits = "msb", rule = "smallest_feasible";
        b.read("methods", methods);
        b.read("random_multiplier", cfg.baselines.random_multiplier);
        b.read("random_bits", bits);
        b.read("budget", cfg.baselines.budget);
        b.read("trials", cfg.baselines.trials);
        b.read("search_rule", rule);
        b.finish();
        for (const auto& m : methods) cfg.baselines.methods.push_back(parse_method(m));
        if (bits != "msb" && bits != "uniform") throw ConfigError("baselines.random_bits must be msb or uniform");
        cfg.baselines.random_bits = bits == "msb" ? BitChoice::msb : BitChoice::uniform;
        cfg.baselines.search_rule = parse_extraction(rule);
    }
    if (top.has("defenses")) {
        Block b(top.sub("defenses"), "defenses");
        b.read("ecc", cfg.defenses.ecc);
        if (b.has("epsilon")) {
            Block e(b.sub("epsilon"), "defenses.epsilon");
            cfg.defenses.epsilon.enabled = true;
            e.read("enabled", cfg.defenses.epsilon.enabled);
            e.read("m", cfg.defenses.epsilon.params.m);
            e.read("confidence_threshold", cfg.defenses.epsilon.params.confidence_threshold);
            e.read("blocks", cfg.defenses.epsilon.params.blocks);
            e.finish();
        }
        b.finish();
    }
    top.read("seeds", cfg.seeds);
    top.read("workers", cfg.workers);
    std::string out_dir;
    top.read("output_dir", out_dir);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    top.finish();
    cfg.validate();
    return cfg;
}

Json campaign_config_to_json(const CampaignConfig& cfg) {
    Json j;
    Json data{{"seed", cfg.data.blobs.seed},
              {"classes", cfg.data.blobs.classes},
              {"samples", cfg.data.blobs.samples},
              {"dim", cfg.data.blobs.dim},
              {"noise", cfg.data.blobs.noise},
              {"eval_samples", cfg.data.eval_samples}};
    if (cfg.data.train_file) data["train_file"] = cfg.data.train_file->string();
    if (cfg.data.eval_file) data["eval_file"] = cfg.data.eval_file->string();
    j["data"] = std::move(data);
    if (cfg.model_file) j["model_file"] = cfg.model_file->string();
    j["train"] = {{"arch", arch_to_json(cfg.train.arch)},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate},
                  {"weight_decay", cfg.train.weight_decay},
                  {"prune_fraction", cfg.train.prune_fraction},
                  {"finetune_epochs", cfg.train.finetune_epochs},
                  {"prune_exits", cfg.train.prune_exits},
                  {"accuracy_floor", cfg.train.accuracy_floor},
                  {"seed", cfg.model_seed}};
    j["profile"] = {{"alpha", cfg.profile.alpha},
                    {"rate_percent", cfg.profile.rate_percent},
                    {"gradient_samples", cfg.profile.gradient_samples}};
    Json ties = Json::array();
    for (Action a : cfg.rl.tie_order) ties.push_back(std::string(to_string(a)));
    j["rl"] = {{"episodes", cfg.rl.episodes},
               {"epsilon", cfg.rl.epsilon},
               {"learn_rate", cfg.rl.learn_rate},
               {"discount", cfg.rl.discount},
               {"tau", cfg.rl.failure_threshold},
               {"early_stop", cfg.rl.early_stop},
               {"transition", std::string(to_string(cfg.rl.transition))},
               {"objective", std::string(to_string(cfg.rl.objective))},
               {"extraction", std::string(to_string(cfg.rl.extraction))},
               {"tie_order", ties}};
    Json methods = Json::array();
    for (Method m : cfg.baselines.methods) methods.push_back(std::string(to_string(m)));
    j["baselines"] = {{"methods", methods},
                      {"random_multiplier", cfg.baselines.random_multiplier},
                      {"random_bits", cfg.baselines.random_bits == BitChoice::msb ? "msb" : "uniform"},
                      {"budget", cfg.baselines.budget},
                      {"trials", cfg.baselines.trials},
                      {"search_rule", std::string(to_string(cfg.baselines.search_rule))}};
    j["defenses"] = {{"ecc", cfg.defenses.ecc},
                     {"epsilon",
                      {{"enabled", cfg.defenses.epsilon.enabled},
                       {"m", cfg.defenses.epsilon.params.m},
                       {"confidence_threshold", cfg.defenses.epsilon.params.confidence_threshold},
                       {"blocks", cfg.defenses.epsilon.params.blocks}}}};
    j["seeds"] = cfg.seeds;
    j["workers"] = cfg.workers;
    j["output_dir"] = cfg.output_dir.string();
    return j;
}

CampaignConfig desk_config() {
    CampaignConfig cfg;
    cfg.train.arch = desk_arch();
    cfg.train.epochs = 20;
    cfg.train.prune_fraction = 0.95;
    cfg.train.finetune_epochs = 15;
    cfg.model_seed = 7;
    cfg.profile.alpha = 0.5;
    cfg.profile.rate_percent = 100.0 * 64.0 / 4096.0;  // k = 64 in the 64x64 projection
    cfg.profile.gradient_samples = 256;
    cfg.rl.episodes = 200;
    cfg.rl.failure_threshold = 0.35;
    cfg.baselines.methods = {Method::random_flips, Method::gradient_greedy, Method::greedy_selection,
                             Method::random_search};
    cfg.defenses.ecc = {"all", "none"};
    cfg.defenses.epsilon.enabled = true;
    cfg.defenses.epsilon.params.blocks = 64;
    return cfg;
}

Localization localization_report(const std::vector<BitFlipSet>& flip_sets, const QuantizedModel& model) {
    Localization loc;
    for (Role r : {Role::generic, Role::attn_q, Role::attn_k, Role::attn_v, Role::attn_o, Role::norm, Role::ffn}) {
        loc.by_role[to_string(r)] = 0;
    }
    for (const auto& set : flip_sets) {
        check_addresses(model, set);
        for (const auto& a : set) {
            ++loc.by_role[to_string(model.layers[a.layer].role)];
            ++loc.by_layer[a.layer];
            ++loc.total;
        }
    }
    return loc;
}

QuantizedModel obtain_model(const CampaignConfig& cfg, const DataSplits& data) {
    if (cfg.model_file) return load_model(*cfg.model_file);
    return train_reference(cfg.train, data.train, cfg.model_seed);
}

SeedRecord run_seed(const CampaignConfig& cfg, const QuantizedModel& model, const Dataset& eval, std::uint64_t seed) {
    SeedRecord rec;
    rec.seed = seed;
    const double tau = cfg.rl.failure_threshold;

    const FlipLlmResult res = run_flipllm(model, eval, seeded_profile(cfg, seed), seeded_rl(cfg, seed));
    rec.profile = res.profile;
    rec.trace = res.search.trace;
    rec.critical = res.critical;
    rec.baseline_accuracy = res.baseline_accuracy;
    rec.final_accuracy = res.final_accuracy;
    rec.perturbation_fraction = res.perturbation_fraction;
    rec.evaluations = res.evaluations;

    const std::size_t layer = res.profile.target_layer;
    const auto& pool = res.profile.initial_candidates;
    {
        std::vector<std::size_t> ordered;
        for (std::size_t p : pool) {
            if (res.critical.contains({layer, p, kMsb})) ordered.push_back(p);
        }
        Evaluator ev(model, eval);
        rec.curve.push_back(ev.baseline());
        std::vector<std::size_t> prefix;
        for (std::size_t p : ordered) {
            prefix.push_back(p);
            rec.curve.push_back(ev.accuracy(BitFlipSet::msb(layer, prefix)));
        }
    }

    const std::size_t width = model.layers[layer].weights->size();
    for (Method m : cfg.baselines.methods) {
        BaselineResult b;
        switch (m) {
            case Method::random_flips: {
                const std::size_t cap = cfg.baselines.random_bits == BitChoice::msb ? width : 8 * width;
                const std::size_t n = std::min(cap, cfg.baselines.random_multiplier * std::max<std::size_t>(1, res.critical.size()));
                b = random_flips(model, eval, layer, n, seed, cfg.baselines.random_bits);
                break;
            }
            case Method::gradient_greedy: b = gradient_greedy(model, eval, layer, cfg.baselines.budget, tau); break;
            case Method::greedy_selection:
                b = greedy_selection(model, eval, layer, pool, cfg.baselines.budget, tau);
                break;
            case Method::random_search:
                b = random_search(model, eval, layer, pool, cfg.baselines.trials, seed, cfg.baselines.search_rule, tau);
                break;
            case Method::brute_force: b = brute_force_oracle(model, eval, layer, pool); break;
        }
        BaselineRow row;
        row.method = m;
        row.flips = b.flips;
        row.final_accuracy = b.final_accuracy;
        row.evaluations = b.evaluations;
        row.curve = b.curve;
        if (m == Method::gradient_greedy || m == Method::greedy_selection) {
            row.flips_to_tau = flips_to_threshold(b.curve, tau);
        } else if (m != Method::random_flips && b.final_accuracy <= tau) {
            row.flips_to_tau = b.flips.size();
        }
        rec.baselines.push_back(std::move(row));
    }

    for (const auto& mode : cfg.defenses.ecc) {
        ProtectionPredicate pred;
        if (mode == "all") {
            pred = [](const WordAddress&) { return true; };
        } else if (mode == "flipset") {
            std::set<WordAddress> words;
            for (const auto& a : res.critical) words.insert({a.layer, a.param / 8});
            pred = [words](const WordAddress& w) { return words.count(w) > 0; };
        } else {
            pred = [](const WordAddress&) { return false; };
        }
        const ProtectedApply pa = protect_and_apply(model, res.critical, pred);
        DefenseRow row;
        row.mode = "ecc";
        row.setting = mode;
        row.accuracy = evaluate_accuracy(pa.model, eval);
        for (const auto& w : pa.words) {
            if (!w.is_protected) continue;
            if (w.status == DecodeStatus::corrected) ++row.corrected;
            if (w.status == DecodeStatus::uncorrectable) ++row.uncorrectable;
        }
        row.fault_detected = row.corrected + row.uncorrectable > 0;
        rec.defenses.push_back(row);
    }

    if (cfg.defenses.epsilon.enabled) {
        const auto& params = cfg.defenses.epsilon.params;
        const auto sigs = build_signatures(model, params.blocks);
        const auto imps = model_importances(model);
        const auto [faulty, snaps] = apply_flipset(model, res.critical);
        const EpsilonSummary s = epsilon_evaluate(faulty, sigs, imps, params, eval);
        DefenseRow row;
        row.mode = "epsilon";
        row.setting = "m=" + num(params.m) + ",gamma=" + num(params.confidence_threshold) +
                      ",blocks=" + std::to_string(params.blocks);
        row.accuracy = s.accuracy;
        row.fault_detected = s.detections > 0;
        for (const auto& c : s.checks) row.corrected += c.corrected_weights;
        rec.defenses.push_back(row);
    }

    rec.localization = localization_report({rec.critical}, model);
    return rec;
}

CampaignReport run_campaign(const CampaignConfig& cfg) {
    cfg.validate();
    const DataSplits data = load_or_generate(cfg.data);
    const QuantizedModel model = obtain_model(cfg, data);

    CampaignReport report;
    report.config = campaign_config_to_json(cfg);
    report.model_accuracy = evaluate_accuracy(model, data.eval);

    std::vector<std::uint64_t> seeds = cfg.seeds;
    std::sort(seeds.begin(), seeds.end());
    auto one = [&](std::uint64_t seed) {
        const auto t0 = std::chrono::steady_clock::now();
        SeedRecord rec;
        try {
            rec = run_seed(cfg, model, data.eval, seed);
        } catch (const std::exception& e) {
            rec = SeedRecord{};
            rec.seed = seed;
            rec.ok = false;
            rec.error = e.what();
        }
        return std::make_pair(std::move(rec), wall_since(t0));
    };

    for (std::size_t start = 0; start < seeds.size(); start += cfg.workers) {
        std::vector<std::future<std::pair<SeedRecord, double>>> batch;
        const std::size_t end = std::min(seeds.size(), start + cfg.workers);
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(std::async(cfg.workers > 1 ? std::launch::async : std::launch::deferred, one, seeds[i]));
        }
        for (auto& f : batch) {
            auto [rec, secs] = f.get();
            report.wall_seconds[rec.seed] = secs;
            report.records.push_back(std::move(rec));
        }
    }

    std::vector<BitFlipSet> sets;
    for (const auto& r : report.records) {
        if (r.ok) sets.push_back(r.critical);
    }
    report.localization = localization_report(sets, model);
    return report;
}

std::vector<AblationRow> ablation_alpha(const CampaignConfig& cfg, const QuantizedModel& model, const Dataset& eval,
                                        const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("alpha grid is empty");
    for (double a : grid) {
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha " + num(a) + " outside [0,1]");
    }
    std::vector<double> alphas = grid;
    std::sort(alphas.begin(), alphas.end());
    alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
    std::vector<std::uint64_t> seeds = cfg.seeds;
    std::sort(seeds.begin(), seeds.end());

    std::vector<AblationRow> rows;
    for (double a : alphas) {
        for (std::uint64_t seed : seeds) {
            AblationRow row;
            row.alpha = a;
            row.seed = seed;
            try {
                ProfileConfig p = seeded_profile(cfg, seed);
                p.alpha = a;
                const FlipLlmResult r = run_flipllm(model, eval, p, seeded_rl(cfg, seed));
                row.flips = r.critical.size();
                row.final_accuracy = r.final_accuracy;
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::optional<double> median_flips(const std::vector<AblationRow>& rows, double alpha) {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.ok && r.alpha == alpha) v.push_back(static_cast<double>(r.flips));
    }
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("fit needs equally many x and y values");
    if (x.size() < 3) throw ParameterError("fit needs at least 3 points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw ParameterError("fit needs at least two distinct x values");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (f.intercept + f.slope * x[i]);
        ss_res += e * e;
    }
    f.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
    return f;
}

ScalingResult scalability_sweep(const CampaignConfig& cfg, const QuantizedModel& model, const Dataset& eval,
                                const std::vector<std::size_t>& k_values, std::size_t steps_per_candidate,
                                std::uint64_t seed) {
    if (k_values.size() < 3) throw ParameterError("scalability sweep needs at least 3 k values");
    if (steps_per_candidate == 0) throw ParameterError("steps_per_candidate must be at least 1");
    const SensitivityProfile prof = profile_layers(model, eval, seeded_profile(cfg, seed));
    const auto& scores = prof.entry_for(prof.target_layer).scores;
    const std::size_t width = scores.size();

    ScalingResult out;
    std::vector<double> xs, ys;
    for (std::size_t k : k_values) {
        if (k == 0 || k > width) {
            throw ParameterError("k=" + std::to_string(k) + " outside [1," + std::to_string(width) + "]");
        }
        RlConfig rl = seeded_rl(cfg, seed);
        rl.episodes = steps_per_candidate * k;
        rl.early_stop = false;
        const auto t0 = std::chrono::steady_clock::now();
        const OptimizeResult r =
            optimize(model, prof.target_layer, RlState::initial(ranked_top_k(scores, k)), eval, rl);
        out.points.push_back({k, rl.episodes, r.evaluations, wall_since(t0)});
        xs.push_back(static_cast<double>(k));
        ys.push_back(static_cast<double>(r.evaluations));
    }
    out.fit = fit_line(xs, ys);
    return out;
}

// ---------------------------------------------------------------------------
// Report (de)serialization.

namespace {

Json localization_to_json(const Localization& l) {
    Json by_layer = Json::object();
    for (const auto& [layer, n] : l.by_layer) by_layer[std::to_string(layer)] = n;
    return {{"by_role", l.by_role}, {"by_layer", by_layer}, {"total", l.total}};
}

Localization localization_from_json(const Json& j) {
    Localization l;
    for (const auto& [k, v] : j.at("by_role").items()) l.by_role[k] = v.get<std::size_t>();
    for (const auto& [k, v] : j.at("by_layer").items()) l.by_layer[std::stoul(k)] = v.get<std::size_t>();
    l.total = j.at("total").get<std::size_t>();
    return l;
}

Json opt_size(const std::optional<std::size_t>& v) { return v ? Json(*v) : Json(nullptr); }

Json record_to_json(const SeedRecord& r) {
    Json j{{"seed", r.seed}, {"ok", r.ok}};
    if (!r.ok) {
        j["error"] = r.error;
        return j;
    }
    j["profile"] = profile_to_json(r.profile);
    Json trace = Json::array();
    for (const auto& t : r.trace) {
        trace.push_back({{"step", t.step},
                         {"action", std::string(to_string(t.action))},
                         {"size", t.size},
                         {"accuracy", t.accuracy},
                         {"reward", t.reward}});
    }
    j["attack"] = {{"trace", trace},
                   {"critical", flips_to_json(r.critical)},
                   {"baseline_accuracy", r.baseline_accuracy},
                   {"final_accuracy", r.final_accuracy},
                   {"perturbation_fraction", r.perturbation_fraction},
                   {"evaluations", r.evaluations},
                   {"curve", r.curve}};
    Json baselines = Json::array();
    for (const auto& b : r.baselines) {
        baselines.push_back({{"method", std::string(to_string(b.method))},
                             {"flips", flips_to_json(b.flips)},
                             {"final_accuracy", b.final_accuracy},
                             {"evaluations", b.evaluations},
                             {"flips_to_tau", opt_size(b.flips_to_tau)},
                             {"curve", b.curve}});
    }
    j["baselines"] = baselines;
    Json defenses = Json::array();
    for (const auto& d : r.defenses) {
        defenses.push_back({{"mode", d.mode},
                            {"setting", d.setting},
                            {"accuracy", d.accuracy},
                            {"fault_detected", d.fault_detected},
                            {"corrected", d.corrected},
                            {"uncorrectable", d.uncorrectable}});
    }
    j["defenses"] = defenses;
    j["localization"] = localization_to_json(r.localization);
    return j;
}

SeedRecord record_from_json(const Json& j) {
    SeedRecord r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ok = j.at("ok").get<bool>();
    if (!r.ok) {
        r.error = j.at("error").get<std::string>();
        return r;
    }
    r.profile = profile_from_json(j.at("profile"));
    const Json& a = j.at("attack");
    for (const Json& t : a.at("trace")) {
        r.trace.push_back({t.at("step").get<std::size_t>(), parse_action(t.at("action").get<std::string>()),
                           t.at("size").get<std::size_t>(), t.at("accuracy").get<double>(),
                           t.at("reward").get<double>()});
    }
    r.critical = flips_from_json(a.at("critical"));
    r.baseline_accuracy = a.at("baseline_accuracy").get<double>();
    r.final_accuracy = a.at("final_accuracy").get<double>();
    r.perturbation_fraction = a.at("perturbation_fraction").get<double>();
    r.evaluations = a.at("evaluations").get<std::size_t>();
    r.curve = a.at("curve").get<std::vector<double>>();
    for (const Json& b : j.at("baselines")) {
        BaselineRow row;
        row.method = parse_method(b.at("method").get<std::string>());
        row.flips = flips_from_json(b.at("flips"));
        row.final_accuracy = b.at("final_accuracy").get<double>();
        row.evaluations = b.at("evaluations").get<std::size_t>();
        if (!b.at("flips_to_tau").is_null()) row.flips_to_tau = b.at("flips_to_tau").get<std::size_t>();
        row.curve = b.at("curve").get<std::vector<double>>();
        r.baselines.push_back(std::move(row));
    }
    for (const Json& d : j.at("defenses")) {
        r.defenses.push_back({d.at("mode").get<std::string>(), d.at("setting").get<std::string>(),
                              d.at("accuracy").get<double>(), d.at("fault_detected").get<bool>(),
                              d.at("corrected").get<std::size_t>(), d.at("uncorrectable").get<std::size_t>()});
    }
    r.localization = localization_from_json(j.at("localization"));
    return r;
}

}  // namespace

Json report_to_json(const CampaignReport& report) {
    Json j;
    j["config"] = report.config;
    j["model_accuracy"] = report.model_accuracy;
    Json records = Json::array();
    for (const auto& r : report.records) records.push_back(record_to_json(r));
    j["records"] = std::move(records);
    j["localization"] = localization_to_json(report.localization);
    Json ablation = Json::array();
    for (const auto& a : report.ablation) {
        Json row{{"alpha", a.alpha}, {"seed", a.seed}, {"ok", a.ok}};
        if (a.ok) {
            row["flips"] = a.flips;
            row["final_accuracy"] = a.final_accuracy;
        } else {
            row["error"] = a.error;
        }
        ablation.push_back(std::move(row));
    }
    j["ablation"] = std::move(ablation);
    if (report.scaling) {
        Json points = Json::array();
        for (const auto& p : report.scaling->points) {
            points.push_back({{"k", p.k}, {"episodes", p.episodes}, {"evaluations", p.evaluations}});
        }
        j["scaling"] = {{"points", points},
                        {"slope", report.scaling->fit.slope},
                        {"intercept", report.scaling->fit.intercept},
                        {"r_squared", report.scaling->fit.r_squared}};
    } else {
        j["scaling"] = nullptr;
    }
    return j;
}

CampaignReport report_from_json(const Json& j) {
    try {
        CampaignReport r;
        r.config = j.at("config");
        r.model_accuracy = j.at("model_accuracy").get<double>();
        for (const Json& rec : j.at("records")) r.records.push_back(record_from_json(rec));
        r.localization = localization_from_json(j.at("localization"));
        for (const Json& a : j.at("ablation")) {
            AblationRow row;
            row.alpha = a.at("alpha").get<double>();
            row.seed = a.at("seed").get<std::uint64_t>();
            row.ok = a.at("ok").get<bool>();
            if (row.ok) {
                row.flips = a.at("flips").get<std::size_t>();
                row.final_accuracy = a.at("final_accuracy").get<double>();
            } else {
                row.error = a.at("error").get<std::string>();
            }
            r.ablation.push_back(std::move(row));
        }
        if (!j.at("scaling").is_null()) {
            const Json& s = j.at("scaling");
            ScalingResult sr;
            for (const Json& p : s.at("points")) {
                sr.points.push_back({p.at("k").get<std::size_t>(), p.at("episodes").get<std::size_t>(),
                                     p.at("evaluations").get<std::size_t>(), 0.0});
            }
            sr.fit = {s.at("slope").get<double>(), s.at("intercept").get<double>(), s.at("r_squared").get<double>()};
            r.scaling = std::move(sr);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed report: ") + e.what());
    }
}

ReportFormat parse_report_format(std::string_view s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    throw ConfigError("unknown report format '" + std::string(s) + "'");
}

std::vector<std::filesystem::path> emit_report(const CampaignReport& report, const std::filesystem::path& dir,
                                               ReportFormat format) {
    std::vector<std::filesystem::path> written;
    auto put = [&](const std::string& name, const std::string& text) {
        write_text(dir / name, text);
        written.push_back(dir / name);
    };

    if (format == ReportFormat::json) {
        put("report.json", report_to_json(report).dump(2) + "\n");
        Json timing = Json::object();
        Json seeds = Json::object();
        for (const auto& [seed, secs] : report.wall_seconds) seeds[std::to_string(seed)] = secs;
        timing["seed_wall_seconds"] = seeds;
        if (report.scaling) {
            Json pts = Json::array();
            for (const auto& p : report.scaling->points) pts.push_back({{"k", p.k}, {"wall_seconds", p.wall_seconds}});
            timing["scaling_wall_seconds"] = pts;
        }
        put("timing.json", timing.dump(2) + "\n");
        return written;
    }

    std::ostringstream attacks, curves, baselines, defenses;
    attacks << "seed,ok,target_layer,flips,baseline_accuracy,final_accuracy,perturbation_fraction,evaluations\n";
    curves << "seed,source,flips,accuracy\n";
    baselines << "seed,method,flips,final_accuracy,evaluations,flips_to_tau\n";
    defenses << "seed,mode,setting,accuracy,fault_detected,corrected,uncorrectable\n";
    for (const auto& r : report.records) {
        if (!r.ok) {
            attacks << r.seed << ",0,,,,,,\n";
            continue;
        }
        attacks << r.seed << ",1," << r.profile.target_layer << ',' << r.critical.size() << ','
                << num(r.baseline_accuracy) << ',' << num(r.final_accuracy) << ',' << num(r.perturbation_fraction)
                << ',' << r.evaluations << '\n';
        for (std::size_t i = 0; i < r.curve.size(); ++i) curves << r.seed << ",flipllm," << i << ',' << num(r.curve[i]) << '\n';
        for (const auto& b : r.baselines) {
            for (std::size_t i = 0; i < b.curve.size(); ++i) {
                curves << r.seed << ',' << to_string(b.method) << ',' << i << ',' << num(b.curve[i]) << '\n';
            }
            baselines << r.seed << ',' << to_string(b.method) << ',' << b.flips.size() << ',' << num(b.final_accuracy)
                      << ',' << b.evaluations << ',' << (b.flips_to_tau ? std::to_string(*b.flips_to_tau) : "") << '\n';
        }
        for (const auto& d : r.defenses) {
            defenses << r.seed << ',' << d.mode << ",\"" << d.setting << "\"," << num(d.accuracy) << ','
                     << (d.fault_detected ? 1 : 0) << ',' << d.corrected << ',' << d.uncorrectable << '\n';
        }
    }
    put("attacks.csv", attacks.str());
    put("curves.csv", curves.str());
    put("baselines.csv", baselines.str());
    put("defenses.csv", defenses.str());
    if (!report.ablation.empty()) {
        std::ostringstream a;
        a << "alpha,seed,ok,flips,final_accuracy\n";
        for (const auto& row : report.ablation) {
            a << num(row.alpha) << ',' << row.seed << ',' << (row.ok ? 1 : 0) << ','
              << (row.ok ? std::to_string(row.flips) : "") << ',' << (row.ok ? num(row.final_accuracy) : "") << '\n';
        }
        put("ablation.csv", a.str());
    }
    if (report.scaling) {
        std::ostringstream s;
        s << "k,episodes,evaluations\n";
        for (const auto& p : report.scaling->points) s << p.k << ',' << p.episodes << ',' << p.evaluations << '\n';
        put("scaling.csv", s.str());
    }
    return written;
}

}  // namespace fliplab
