// fliplab command line: thin wrappers over the library, one per stage.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "fliplab/baselines.hpp"
#include "fliplab/defense.hpp"
#include "fliplab/errors.hpp"
#include "fliplab/harness.hpp"
#include "fliplab/io.hpp"

using namespace fliplab;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "json";
};

struct Inputs {
    std::string model;
    std::string data;
};

struct AttackFlags {
    std::optional<double> alpha, rate, epsilon, learn_rate, discount, tau;
    std::optional<std::size_t> episodes;
};

CampaignConfig load_config(const Globals& g) {
    CampaignConfig cfg = g.config.empty() ? desk_config() : campaign_config_from_json(read_json(g.config));
    if (g.seed) cfg.seeds = {*g.seed};
    return cfg;
}

std::uint64_t first_seed(const CampaignConfig& cfg) { return cfg.seeds.front(); }

QuantizedModel model_for(const CampaignConfig& cfg, const Inputs& in) {
    if (!in.model.empty()) return load_model(in.model);
    return obtain_model(cfg, load_or_generate(cfg.data));
}

Dataset data_for(const CampaignConfig& cfg, const Inputs& in, const QuantizedModel& model) {
    if (!in.data.empty()) return read_csv(in.data, model.num_classes());
    return load_or_generate(cfg.data).eval;
}

void apply(const AttackFlags& f, CampaignConfig& cfg) {
    if (f.alpha) cfg.profile.alpha = *f.alpha;
    if (f.rate) cfg.profile.rate_percent = *f.rate;
    if (f.episodes) cfg.rl.episodes = *f.episodes;
    if (f.epsilon) cfg.rl.epsilon = *f.epsilon;
    if (f.learn_rate) cfg.rl.learn_rate = *f.learn_rate;
    if (f.discount) cfg.rl.discount = *f.discount;
    if (f.tau) cfg.rl.failure_threshold = *f.tau;
    cfg.profile.validate();
    cfg.rl.validate();
}

void add_inputs(CLI::App* cmd, Inputs& in) {
    cmd->add_option("--model", in.model, "Model JSON (default: train from config)")->check(CLI::ExistingFile);
    cmd->add_option("--data", in.data, "Evaluation CSV (default: generated eval split)")->check(CLI::ExistingFile);
}

void add_attack_flags(CLI::App* cmd, AttackFlags& f) {
    cmd->add_option("--alpha", f.alpha, "Gradient share of the sensitivity score");
    cmd->add_option("--rate", f.rate, "Candidate rate r in percent of the layer size");
    cmd->add_option("--episodes", f.episodes, "Q-learning steps G");
    cmd->add_option("--epsilon", f.epsilon, "Exploration rate");
    cmd->add_option("--learn-rate", f.learn_rate, "Q-learning rate");
    cmd->add_option("--discount", f.discount, "Discount factor");
    cmd->add_option("--tau", f.tau, "Failure threshold");
}

void emit_json(const Globals& g, const Json& j) {
    if (g.format != "json") throw ConfigError("--format csv is only supported by campaign, ablate-alpha, scale-sweep and report");
    if (g.out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        write_json(g.out, j);
    }
}

void emit_campaign(const Globals& g, const CampaignConfig& cfg, const CampaignReport& report) {
    const std::filesystem::path dir = g.out.empty() ? cfg.output_dir : std::filesystem::path(g.out);
    for (const auto& p : emit_report(report, dir, parse_report_format(g.format))) std::cerr << "wrote " << p.string() << "\n";
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse number '" + tok + "' in list '" + s + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bit-flip attack, baseline and defense laboratory for int8 multi-exit networks"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Campaign configuration JSON")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed (overrides the config's seed list)");
    app.add_option("--out", g.out, "Output file or directory");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}));

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Write a seeded Gaussian-blob dataset as CSV");
    BlobParams blobs;
    std::string split = "blobs";
    std::size_t gen_samples = 0;
    gen->add_option("--classes", blobs.classes, "Class count");
    gen->add_option("--samples", gen_samples, "Sample count");
    gen->add_option("--dim", blobs.dim, "Feature count");
    gen->add_option("--noise", blobs.noise, "Per-feature standard deviation");
    gen->add_option("--split", split, "blobs, or the campaign's train/eval stream")
        ->check(CLI::IsMember({"blobs", "train", "eval"}));

    // train
    auto* train = app.add_subcommand("train", "Train and quantize the reference model");
    std::string train_data;
    train->add_option("--data", train_data, "Training CSV (default: generated train split)")->check(CLI::ExistingFile);

    // profile
    auto* prof = app.add_subcommand("profile", "Layer-wise sensitivity profiling");
    Inputs prof_in;
    AttackFlags prof_flags;
    add_inputs(prof, prof_in);
    prof->add_option("--alpha", prof_flags.alpha, "Gradient share of the sensitivity score");
    prof->add_option("--rate", prof_flags.rate, "Candidate rate r in percent");

    // attack
    auto* attack = app.add_subcommand("attack", "Profile then search for a critical bit set");
    Inputs attack_in;
    AttackFlags attack_flags;
    add_inputs(attack, attack_in);
    add_attack_flags(attack, attack_flags);

    // baseline
    auto* base = app.add_subcommand("baseline", "Run one baseline against the profiled target layer");
    Inputs base_in;
    AttackFlags base_flags;
    std::string method;
    std::optional<std::size_t> count, budget, trials;
    std::string bits = "msb";
    add_inputs(base, base_in);
    add_attack_flags(base, base_flags);
    base->add_option("--method", method, "random_flips, gradient_greedy, greedy_selection, random_search, brute_force")
        ->required();
    base->add_option("--count", count, "random_flips: number of flips (default 50)");
    base->add_option("--budget", budget, "Greedy step budget");
    base->add_option("--trials", trials, "random_search subsets");
    base->add_option("--bits", bits, "random_flips bit choice")->check(CLI::IsMember({"msb", "uniform"}));

    // defend
    auto* defend = app.add_subcommand("defend", "Apply a flip set under ECC or EPSILON");
    Inputs def_in;
    std::string mode, flips_file, protect = "all", sig_out;
    DetectionParams det;
    add_inputs(defend, def_in);
    defend->add_option("--mode", mode, "ecc or epsilon")->required()->check(CLI::IsMember({"ecc", "epsilon"}));
    defend->add_option("--flips", flips_file, "Flip-set JSON")->required()->check(CLI::ExistingFile);
    defend->add_option("--protect", protect, "ECC coverage")->check(CLI::IsMember({"all", "flipset", "none"}));
    defend->add_option("--m", det.m, "EPSILON threshold offset");
    defend->add_option("--gamma", det.confidence_threshold, "EPSILON exit confidence threshold");
    defend->add_option("--blocks", det.blocks, "EPSILON sparsity blocks per layer");
    defend->add_option("--signatures-out", sig_out, "Also write the golden signatures here");

    // campaign / sweeps / report
    auto* campaign = app.add_subcommand("campaign", "Seeded end-to-end runs");
    auto* ablate = app.add_subcommand("ablate-alpha", "Attack once per (alpha, seed)");
    std::string grid = "0,0.5,1";
    ablate->add_option("--grid", grid, "Comma-separated alpha values");
    auto* sweep = app.add_subcommand("scale-sweep", "Evaluation count against pool size k");
    std::string ks = "16,32,64,128";
    std::size_t steps_per_candidate = 3;
    sweep->add_option("--k", ks, "Comma-separated pool sizes");
    sweep->add_option("--steps-per-candidate", steps_per_candidate, "Q-learning steps per candidate");
    auto* rep = app.add_subcommand("report", "Re-emit a canonical report.json");
    std::string report_in;
    rep->add_option("--in", report_in, "report.json")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) {
            if (g.format != "json" && g.format != "csv") throw ConfigError("bad format");
            blobs.seed = g.seed.value_or(0);
            if (gen_samples) blobs.samples = gen_samples;
            Dataset d;
            if (split == "blobs") {
                d = make_blobs(blobs);
            } else {
                d = make_blobs_split(blobs, blobs.seed * 100 + (split == "train" ? 1 : 2), blobs.samples);
            }
            if (g.out.empty()) throw ConfigError("gen-data needs --out");
            write_csv(d, g.out);
            return 0;
        }
        CampaignConfig cfg = load_config(g);
        if (*train) {
            const DataSplits splits = load_or_generate(cfg.data);
            const Dataset data = train_data.empty() ? splits.train : read_csv(train_data);
            if (g.seed) cfg.model_seed = *g.seed;
            const QuantizedModel m = train_reference(cfg.train, data, cfg.model_seed);
            if (g.out.empty()) throw ConfigError("train needs --out");
            save_model(g.out, m);
            std::cerr << "train accuracy " << m.meta.train_accuracy << "\n";
            return 0;
        }
        if (*prof) {
            apply(prof_flags, cfg);
            const QuantizedModel m = model_for(cfg, prof_in);
            const Dataset d = data_for(cfg, prof_in, m);
            ProfileConfig pc = cfg.profile;
            pc.eval_subset_seed = first_seed(cfg);
            emit_json(g, profile_to_json(profile_layers(m, d, pc)));
            return 0;
        }
        if (*attack) {
            apply(attack_flags, cfg);
            const QuantizedModel m = model_for(cfg, attack_in);
            const Dataset d = data_for(cfg, attack_in, m);
            ProfileConfig pc = cfg.profile;
            pc.eval_subset_seed = first_seed(cfg);
            RlConfig rc = cfg.rl;
            rc.rng_seed = first_seed(cfg);
            const FlipLlmResult r = run_flipllm(m, d, pc, rc);
            Json trace = Json::array();
            for (const auto& t : r.search.trace) {
                trace.push_back({{"step", t.step},
                                 {"action", std::string(to_string(t.action))},
                                 {"size", t.size},
                                 {"accuracy", t.accuracy},
                                 {"reward", t.reward}});
            }
            emit_json(g, {{"profile", profile_to_json(r.profile)},
                          {"trace", trace},
                          {"critical", flips_to_json(r.critical)},
                          {"baseline_accuracy", r.baseline_accuracy},
                          {"acc_final", r.final_accuracy},
                          {"perturbation_fraction", r.perturbation_fraction},
                          {"evaluations", r.evaluations}});
            return 0;
        }
        if (*base) {
            apply(base_flags, cfg);
            const Method mth = parse_method(method);
            const QuantizedModel m = model_for(cfg, base_in);
            const Dataset d = data_for(cfg, base_in, m);
            ProfileConfig pc = cfg.profile;
            const std::uint64_t seed = first_seed(cfg);
            pc.eval_subset_seed = seed;
            const SensitivityProfile p = profile_layers(m, d, pc);
            const std::size_t layer = p.target_layer;
            const double tau = cfg.rl.failure_threshold;
            const std::size_t b = budget.value_or(cfg.baselines.budget);
            BaselineResult r;
            switch (mth) {
                case Method::random_flips:
                    r = random_flips(m, d, layer, count.value_or(50), seed, bits == "msb" ? BitChoice::msb : BitChoice::uniform);
                    break;
                case Method::gradient_greedy: r = gradient_greedy(m, d, layer, b, tau); break;
                case Method::greedy_selection: r = greedy_selection(m, d, layer, p.initial_candidates, b, tau); break;
                case Method::random_search:
                    r = random_search(m, d, layer, p.initial_candidates, trials.value_or(cfg.baselines.trials), seed,
                                      cfg.baselines.search_rule, tau);
                    break;
                case Method::brute_force: r = brute_force_oracle(m, d, layer, p.initial_candidates); break;
            }
            emit_json(g, {{"method", std::string(to_string(r.method))},
                          {"target_layer", layer},
                          {"flips", flips_to_json(r.flips)},
                          {"final_accuracy", r.final_accuracy},
                          {"evaluations", r.evaluations},
                          {"curve", r.curve}});
            return 0;
        }
        if (*defend) {
            const QuantizedModel m = model_for(cfg, def_in);
            const Dataset d = data_for(cfg, def_in, m);
            const BitFlipSet flips = flips_from_json(read_json(flips_file));
            check_addresses(m, flips);
            Json out{{"mode", mode}, {"flips", flips.size()}, {"golden_accuracy", evaluate_accuracy(m, d)}};
            if (mode == "ecc") {
                std::set<WordAddress> words;
                for (const auto& a : flips) words.insert({a.layer, a.param / 8});
                ProtectionPredicate pred = [&](const WordAddress& w) {
                    return protect == "all" || (protect == "flipset" && words.count(w) > 0);
                };
                const ProtectedApply pa = protect_and_apply(m, flips, pred);
                Json ws = Json::array();
                for (const auto& w : pa.words) {
                    ws.push_back({{"layer", w.address.layer},
                                  {"word", w.address.word},
                                  {"flips", w.flips},
                                  {"protected", w.is_protected},
                                  {"status", std::string(to_string(w.status))}});
                }
                out["protect"] = protect;
                out["accuracy"] = evaluate_accuracy(pa.model, d);
                out["words"] = ws;
            } else {
                det.validate();
                const auto sigs = build_signatures(m, det.blocks);
                const auto imps = model_importances(m);
                if (!sig_out.empty()) write_json(sig_out, signatures_to_json(sigs, imps, det.m));
                const auto [faulty, snaps] = apply_flipset(m, flips);
                const EpsilonSummary s = epsilon_evaluate(faulty, sigs, imps, det, d);
                Json checks = Json::array();
                for (const auto& c : s.checks) {
                    checks.push_back({{"layer", c.layer},
                                      {"score", c.score},
                                      {"threshold", c.threshold},
                                      {"flagged", c.flagged},
                                      {"corrected_weights", c.corrected_weights}});
                }
                out["faulty_accuracy"] = evaluate_accuracy(faulty, d);
                out["accuracy"] = s.accuracy;
                out["early_exits"] = s.early_exits;
                out["stage2_runs"] = s.stage2_runs;
                out["detections"] = s.detections;
                out["checks"] = checks;
            }
            emit_json(g, out);
            return 0;
        }
        if (*campaign) {
            const CampaignReport report = run_campaign(cfg);
            emit_campaign(g, cfg, report);
            for (const auto& r : report.records) {
                if (!r.ok) std::cerr << "seed " << r.seed << " failed: " << r.error << "\n";
            }
            return std::all_of(report.records.begin(), report.records.end(), [](const auto& r) { return r.ok; }) ? 0 : 1;
        }
        if (*ablate || *sweep) {
            const DataSplits splits = load_or_generate(cfg.data);
            const QuantizedModel m = obtain_model(cfg, splits);
            CampaignReport report;
            report.config = campaign_config_to_json(cfg);
            report.model_accuracy = evaluate_accuracy(m, splits.eval);
            report.localization = localization_report({}, m);
            if (*ablate) {
                report.ablation = ablation_alpha(cfg, m, splits.eval, parse_doubles(grid));
                for (double a : parse_doubles(grid)) {
                    if (auto med = median_flips(report.ablation, a)) std::cerr << "alpha " << a << " median |I| " << *med << "\n";
                }
            } else {
                std::vector<std::size_t> kv;
                for (double k : parse_doubles(ks)) {
                    if (k < 1 || k != static_cast<double>(static_cast<std::size_t>(k))) {
                        throw ConfigError("k values must be positive integers");
                    }
                    kv.push_back(static_cast<std::size_t>(k));
                }
                report.scaling = scalability_sweep(cfg, m, splits.eval, kv, steps_per_candidate, first_seed(cfg));
                std::cerr << "r_squared " << report.scaling->fit.r_squared << "\n";
            }
            emit_campaign(g, cfg, report);
            return 0;
        }
        if (*rep) {
            const CampaignReport report = report_from_json(read_json(report_in));
            if (g.out.empty()) throw ConfigError("report needs --out");
            const std::filesystem::path dir = g.out;
            for (const auto& p : emit_report(report, dir, parse_report_format(g.format))) std::cerr << "wrote " << p.string() << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
