#include "fliplab/rl.hpp"

#include <algorithm>
#include <cmath>

#include "fliplab/errors.hpp"
#include "fliplab/evaluator.hpp"

namespace fliplab {

std::string_view to_string(Action a) {
    switch (a) {
        case Action::add: return "add";
        case Action::remove: return "remove";
        case Action::shift: return "shift";
    }
    return "?";
}

Action parse_action(std::string_view s) {
    if (s == "add") return Action::add;
    if (s == "remove") return Action::remove;
    if (s == "shift") return Action::shift;
    throw ConfigError("unknown action '" + std::string(s) + "'");
}

std::string_view to_string(TransitionMode m) { return m == TransitionMode::ranked ? "ranked" : "random"; }
std::string_view to_string(Objective o) { return o == Objective::attacker ? "attacker" : "reward"; }
std::string_view to_string(Extraction e) {
    return e == Extraction::smallest_feasible ? "smallest_feasible" : "lowest_accuracy";
}

TransitionMode parse_transition_mode(std::string_view s) {
    if (s == "ranked") return TransitionMode::ranked;
    if (s == "random") return TransitionMode::random;
    throw ConfigError("unknown transition mode '" + std::string(s) + "'");
}

Objective parse_objective(std::string_view s) {
    if (s == "attacker") return Objective::attacker;
    if (s == "reward") return Objective::reward;
    throw ConfigError("unknown objective '" + std::string(s) + "'");
}

Extraction parse_extraction(std::string_view s) {
    if (s == "smallest_feasible") return Extraction::smallest_feasible;
    if (s == "lowest_accuracy") return Extraction::lowest_accuracy;
    throw ConfigError("unknown extraction rule '" + std::string(s) + "'");
}

void RlConfig::validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
    if (!(learn_rate > 0.0 && learn_rate <= 1.0)) throw ConfigError("learn_rate must lie in (0,1]");
    if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0,1)");
    if (!(failure_threshold >= 0.0 && failure_threshold <= 1.0)) throw ConfigError("failure_threshold must lie in [0,1]");
    for (std::size_t i = 0; i < tie_order.size(); ++i) {
        for (std::size_t j = i + 1; j < tie_order.size(); ++j) {
            if (tie_order[i] == tie_order[j]) throw ConfigError("tie_order must list each action once");
        }
    }
}

RlState RlState::initial(std::vector<std::size_t> pool) {
    RlState s;
    s.indices = pool;
    std::sort(s.indices.begin(), s.indices.end());
    if (std::adjacent_find(s.indices.begin(), s.indices.end()) != s.indices.end()) {
        throw ParameterError("candidate pool contains duplicates");
    }
    s.pool = std::move(pool);
    return s;
}

bool RlState::contains(std::size_t param) const { return std::binary_search(indices.begin(), indices.end(), param); }

std::size_t RlState::rank_of(std::size_t param) const {
    return static_cast<std::size_t>(std::find(pool.begin(), pool.end(), param) - pool.begin());
}

bool RlState::can_add() const {
    return std::any_of(pool.begin(), pool.end(), [&](std::size_t p) { return !contains(p); });
}

bool RlState::applicable(Action a) const {
    switch (a) {
        case Action::add: return can_add();
        case Action::remove: return can_remove();
        case Action::shift: return can_shift();
    }
    return false;
}

double QPolicy::q(const std::vector<std::size_t>& s, Action a) const {
    auto it = table.find(s);
    return it == table.end() ? 0.0 : it->second[static_cast<std::size_t>(a)];
}

double QPolicy::max_q(const std::vector<std::size_t>& s) const {
    auto it = table.find(s);
    if (it == table.end()) return 0.0;
    return *std::max_element(it->second.begin(), it->second.end());
}

void QPolicy::set(const std::vector<std::size_t>& s, Action a, double v) {
    auto [it, fresh] = table.try_emplace(s, std::array<double, 3>{0.0, 0.0, 0.0});
    it->second[static_cast<std::size_t>(a)] = v;
}

bool preferred(double accuracy, std::size_t size, double best_accuracy, std::size_t best_size, Extraction rule,
               double tau) {
    const bool lowest_first = accuracy < best_accuracy || (accuracy == best_accuracy && size < best_size);
    if (rule == Extraction::lowest_accuracy) return lowest_first;
    const bool feasible = accuracy <= tau;
    const bool best_feasible = best_accuracy <= tau;
    if (feasible != best_feasible) return feasible;
    if (feasible) return size < best_size || (size == best_size && accuracy < best_accuracy);
    return lowest_first;
}

void QPolicy::observe(const std::vector<std::size_t>& s, double accuracy, Extraction rule, double tau) {
    if (!has_best || preferred(accuracy, s.size(), best_accuracy, best_state.size(), rule, tau)) {
        best_state = s;
        best_accuracy = accuracy;
        has_best = true;
    }
}

double reward(double accuracy, std::size_t set_size) {
    return -(1.0 - accuracy) / static_cast<double>(std::max<std::size_t>(1, set_size));
}

Action select_action(const RlState& state, const QPolicy& policy, double epsilon, Rng& rng, const ActionOrder& tie_order) {
    std::vector<Action> options;
    for (Action a : tie_order) {
        if (state.applicable(a)) options.push_back(a);
    }
    if (options.empty()) throw StuckStateError("no applicable action from a state of size " + std::to_string(state.indices.size()));

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
        return options[pick(rng)];
    }
    Action best = options.front();
    double best_q = policy.q(state.indices, best);
    for (std::size_t i = 1; i < options.size(); ++i) {
        const double v = policy.q(state.indices, options[i]);
        if (v > best_q) {
            best = options[i];
            best_q = v;
        }
    }
    return best;
}

namespace {

// Highest-ranked pool index not in `s` and different from `skip`.
std::optional<std::size_t> best_outside(const RlState& s, std::optional<std::size_t> skip) {
    for (std::size_t p : s.pool) {
        if (!s.contains(p) && p != skip) return p;
    }
    return std::nullopt;
}

std::size_t worst_inside(const RlState& s) {
    std::size_t worst = s.indices.front();
    std::size_t worst_rank = s.rank_of(worst);
    for (std::size_t p : s.indices) {
        const std::size_t r = s.rank_of(p);
        if (r > worst_rank || (r == worst_rank && p > worst)) {
            worst = p;
            worst_rank = r;
        }
    }
    return worst;
}

std::size_t random_outside(const RlState& s, Rng& rng) {
    std::vector<std::size_t> out;
    for (std::size_t p : s.pool) {
        if (!s.contains(p)) out.push_back(p);
    }
    std::uniform_int_distribution<std::size_t> pick(0, out.size() - 1);
    return out[pick(rng)];
}

std::size_t random_inside(const RlState& s, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, s.indices.size() - 1);
    return s.indices[pick(rng)];
}

void insert_sorted(std::vector<std::size_t>& v, std::size_t x) { v.insert(std::lower_bound(v.begin(), v.end(), x), x); }

void erase_sorted(std::vector<std::size_t>& v, std::size_t x) { v.erase(std::lower_bound(v.begin(), v.end(), x)); }

}  // namespace

RlState transition(const RlState& state, Action action, Rng& rng, TransitionMode mode) {
    if (!state.applicable(action)) {
        throw ParameterError("action " + std::string(to_string(action)) + " is not applicable to a state of size " +
                             std::to_string(state.indices.size()));
    }
    RlState next = state;
    const bool ranked = mode == TransitionMode::ranked;
    switch (action) {
        case Action::add:
            insert_sorted(next.indices, ranked ? *best_outside(state, std::nullopt) : random_outside(state, rng));
            break;
        case Action::remove:
            erase_sorted(next.indices, ranked ? worst_inside(state) : random_inside(state, rng));
            break;
        case Action::shift: {
            const std::size_t out = ranked ? worst_inside(state) : random_inside(state, rng);
            const std::size_t in = ranked ? *best_outside(state, std::nullopt) : random_outside(state, rng);
            erase_sorted(next.indices, out);
            insert_sorted(next.indices, in);
            break;
        }
    }
    return next;
}

void q_update(QPolicy& policy, const std::vector<std::size_t>& s, Action a, double r,
              const std::vector<std::size_t>& s_next, double learn_rate, double discount) {
    if (!std::isfinite(r)) throw ParameterError("reward must be finite");
    const double target = r + discount * policy.max_q(s_next);
    policy.set(s, a, (1.0 - learn_rate) * policy.q(s, a) + learn_rate * target);
}

OptimizeResult optimize(const QuantizedModel& model, std::size_t target_layer, const RlState& s0, const Dataset& data,
                        const RlConfig& cfg, ExitSelector exit) {
    cfg.validate();
    if (s0.indices.empty()) throw ParameterError("initial state must be nonempty");
    if (target_layer >= model.layers.size() || !model.layers[target_layer].weights) {
        throw AddressError("target layer " + std::to_string(target_layer) + " has no weights");
    }
    for (std::size_t p : s0.indices) {
        if (s0.rank_of(p) == s0.pool.size()) throw ParameterError("initial state leaves the candidate pool");
    }
    check_addresses(model, BitFlipSet::msb(target_layer, s0.pool));

    Evaluator eval(model, data, exit);
    Rng rng = stage_rng(cfg.rng_seed, "q-learning");
    OptimizeResult out;

    RlState s = s0;
    const double acc0 = eval.accuracy(BitFlipSet::msb(target_layer, s.indices));
    out.policy.observe(s.indices, acc0, cfg.extraction, cfg.failure_threshold);

    for (std::size_t step = 0; step < cfg.episodes; ++step) {
        if (cfg.early_stop && out.policy.best_accuracy <= cfg.failure_threshold) break;
        const Action a = select_action(s, out.policy, cfg.epsilon, rng, cfg.tie_order);
        RlState next = transition(s, a, rng, cfg.transition);
        const double acc = eval.accuracy(BitFlipSet::msb(target_layer, next.indices));
        const double r = reward(acc, next.indices.size());
        const double signal = cfg.objective == Objective::attacker ? -r - 1.0 : r;
        q_update(out.policy, s.indices, a, signal, next.indices, cfg.learn_rate, cfg.discount);
        out.policy.observe(next.indices, acc, cfg.extraction, cfg.failure_threshold);
        out.trace.push_back({step, a, next.indices.size(), acc, r});
        s = std::move(next);
    }

    out.flips = BitFlipSet::msb(target_layer, out.policy.best_state);
    out.accuracy = out.policy.best_accuracy;
    out.evaluations = eval.evaluations();
    if (!(eval.model() == model)) throw InvariantError("search left the working model perturbed");
    return out;
}

FlipLlmResult run_flipllm(const QuantizedModel& model, const Dataset& data, const ProfileConfig& profile_cfg,
                          const RlConfig& rl_cfg) {
    profile_cfg.validate();
    rl_cfg.validate();
    FlipLlmResult out;
    out.profile = profile_layers(model, data, profile_cfg);
    const RlState s0 = RlState::initial(out.profile.initial_candidates);
    out.search = optimize(model, out.profile.target_layer, s0, data, rl_cfg);
    out.critical = out.search.flips;

    Evaluator eval(model, data);
    out.baseline_accuracy = eval.baseline();
    out.final_accuracy = eval.accuracy(out.critical);
    out.perturbation_fraction =
        static_cast<double>(out.critical.size()) / (8.0 * static_cast<double>(model.total_weight_count()));
    out.evaluations = out.profile.evaluations + out.search.evaluations + eval.evaluations();
    return out;
}

}  // namespace fliplab
