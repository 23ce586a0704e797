#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fliplab/dataset.hpp"
#include "fliplab/fault.hpp"
#include "fliplab/model.hpp"
#include "fliplab/profiler.hpp"
#include "fliplab/rng.hpp"

namespace fliplab {

enum class Action { add, remove, shift };

std::string_view to_string(Action a);
Action parse_action(std::string_view s);

using ActionOrder = std::array<Action, 3>;
inline constexpr ActionOrder kEnumOrder{Action::add, Action::remove, Action::shift};

/// How add/remove/shift pick indices: by sensitivity rank or uniformly.
enum class TransitionMode { ranked, random };

/// What the Q-table learns. `attacker` feeds the Bellman update with
/// -r_t - 1, the accuracy lost per flip measured against its ceiling of 1, so
/// argmax prefers damaging compact sets and an unvisited entry (0) outranks
/// every learned one. `reward` feeds r_t unchanged.
enum class Objective { attacker, reward };

/// How the returned set is extracted from the states visited.
/// `smallest_feasible`: smallest state with accuracy <= tau (ties: lower
/// accuracy), falling back to `lowest_accuracy` when no state reached tau.
/// `lowest_accuracy`: lowest accuracy, ties toward the smaller set.
enum class Extraction { smallest_feasible, lowest_accuracy };

std::string_view to_string(TransitionMode m);
std::string_view to_string(Objective o);
std::string_view to_string(Extraction e);
TransitionMode parse_transition_mode(std::string_view s);
Objective parse_objective(std::string_view s);
Extraction parse_extraction(std::string_view s);

/// True when a state of (accuracy, size) should replace the incumbent under `rule`.
bool preferred(double accuracy, std::size_t size, double best_accuracy, std::size_t best_size, Extraction rule,
               double tau);

struct RlConfig {
    std::size_t episodes = 200;  // G, steps of the single trajectory
    double epsilon = 0.1;
    double learn_rate = 0.1;
    double discount = 0.9;
    std::uint64_t rng_seed = 0;
    double failure_threshold = 0.35;  // tau
    bool early_stop = false;          // stop once a state reaches tau
    TransitionMode transition = TransitionMode::ranked;
    Objective objective = Objective::attacker;
    Extraction extraction = Extraction::smallest_feasible;
    ActionOrder tie_order = {Action::remove, Action::shift, Action::add};

    void validate() const;
};

/// A flip set inside the target layer plus the sensitivity-ordered pool it
/// draws from. `indices` is kept sorted.
struct RlState {
    std::vector<std::size_t> indices;
    std::vector<std::size_t> pool;

    static RlState initial(std::vector<std::size_t> pool);
    bool contains(std::size_t param) const;
    /// Position of `param` in the pool; pool.size() when absent.
    std::size_t rank_of(std::size_t param) const;
    bool can_add() const;
    bool can_remove() const { return !indices.empty(); }
    bool can_shift() const { return can_remove() && can_add(); }
    bool applicable(Action a) const;
};

struct QPolicy {
    std::map<std::vector<std::size_t>, std::array<double, 3>> table;
    std::vector<std::size_t> best_state;
    double best_accuracy = 1.0;
    bool has_best = false;

    double q(const std::vector<std::size_t>& s, Action a) const;
    double max_q(const std::vector<std::size_t>& s) const;
    void set(const std::vector<std::size_t>& s, Action a, double v);
    /// Offers an evaluated state to the best-state tracker.
    void observe(const std::vector<std::size_t>& s, double accuracy, Extraction rule, double tau);
};

/// r_t = -(1 - acc) / max(1, |s|).
double reward(double accuracy, std::size_t set_size);

/// Epsilon-greedy choice among applicable actions; greedy ties resolved by
/// `tie_order`. Always consumes one uniform draw, plus one when exploring.
Action select_action(const RlState& state, const QPolicy& policy, double epsilon, Rng& rng,
                     const ActionOrder& tie_order = kEnumOrder);

/// Applies `action`. Ranked mode: add inserts the best-ranked pool index not in
/// the state, remove drops the worst-ranked member, shift does both with the
/// insertion chosen among indices outside the original state.
RlState transition(const RlState& state, Action action, Rng& rng, TransitionMode mode = TransitionMode::ranked);

/// Q(s,a) <- (1 - lr) Q(s,a) + lr (r + discount * max_a' Q(s',a')).
void q_update(QPolicy& policy, const std::vector<std::size_t>& s, Action a, double r,
              const std::vector<std::size_t>& s_next, double learn_rate, double discount);

struct TraceStep {
    std::size_t step = 0;
    Action action = Action::add;
    std::size_t size = 0;
    double accuracy = 0.0;
    double reward = 0.0;
};

struct OptimizeResult {
    BitFlipSet flips;
    double accuracy = 0.0;  // accuracy of the returned set
    QPolicy policy;
    std::vector<TraceStep> trace;
    std::size_t evaluations = 0;
};

/// Phase 3: one persistent trajectory of cfg.episodes steps starting at s0.
OptimizeResult optimize(const QuantizedModel& model, std::size_t target_layer, const RlState& s0, const Dataset& data,
                        const RlConfig& cfg, ExitSelector exit = {});

struct FlipLlmResult {
    SensitivityProfile profile;
    OptimizeResult search;
    BitFlipSet critical;
    double final_accuracy = 0.0;
    double baseline_accuracy = 0.0;
    double perturbation_fraction = 0.0;  // |I| / (8 * total weights)
    std::size_t evaluations = 0;         // profile + search + final check
};

/// Profile, seed the pool with the target layer's top-k, search, then apply
/// the result to a copy and measure it.
FlipLlmResult run_flipllm(const QuantizedModel& model, const Dataset& data, const ProfileConfig& profile_cfg,
                          const RlConfig& rl_cfg);

}  // namespace fliplab
