#pragma once

// Tabular categorical transition model over canonical state strings.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "itp/agent.hpp"
#include "itp/env.hpp"
#include "itp/rng.hpp"

namespace itp {

struct TransitionRecord {
    std::string state;
    std::string action;
    std::string next_state;
    double reward = 0.0;
    bool done = false;
    bool operator==(const TransitionRecord&) const = default;
};

enum class Fallback : std::uint8_t { self_loop, error };

struct Successor {
    std::string next_state;
    double reward = 0.0;
    bool done = false;
    double count = 0.0;
    bool operator==(const Successor&) const = default;
};

struct WorldModelParams {
    // key: state + '\n' + action; successors sorted by (next_state, reward, done)
    std::unordered_map<std::string, std::vector<Successor>> table;
    double smoothing_alpha = 0.0;
    Fallback fallback = Fallback::self_loop;
    // Every state string seen as a source or successor, sorted.
    std::vector<std::string> observed_states;

    bool operator==(const WorldModelParams&) const = default;
};

// Error-injecting view over a fitted model. epsilon = 0 behaves exactly like the inner model.
struct NoisyWorldModel {
    std::shared_ptr<const WorldModelParams> inner;
    double epsilon = 0.0;
    std::uint64_t noise_seed = 0;
};

struct Prediction {
    std::string next_state;
    double reward = 0.0;
    bool done = false;
    bool operator==(const Prediction&) const = default;
};

// Log-likelihood reported for zero-probability events.
inline constexpr double kLogZero = -1e30;

std::string transition_key(std::string_view state, std::string_view action);

WorldModelParams fit_world_model(std::span<const TransitionRecord> data, double alpha = 0.0,
                                 Fallback fallback = Fallback::self_loop);

// Normalized successor probabilities for a seen (state, action) pair, aligned with its successor list.
std::vector<double> successor_probabilities(const WorldModelParams& wm, const std::vector<Successor>& entries);

Prediction predict_next(const WorldModelParams& wm, const std::string& state, const std::string& action, Rng& rng);
Prediction predict_next(const NoisyWorldModel& wm, const std::string& state, const std::string& action, Rng& rng);

double wm_log_likelihood(const WorldModelParams& wm, const std::string& state, const std::string& action,
                         const std::string& next_state);

// Sum of -log p(next|state,action) over the records.
double total_nll(const WorldModelParams& wm, std::span<const TransitionRecord> data);

struct RolloutOptions {
    double temperature = 1.0;
    // Probability of replacing the policy's choice with a uniformly drawn inadmissible action.
    double invalid_action_rate = 0.1;
};

// Samples the policy on tasks[i % tasks.size()] for each episode i. Records
// carry done=true only for goal-reaching transitions; step-limit cut-offs are
// an episode property, not a transition property.
std::vector<TransitionRecord> collect_rollouts(const AgentParams& policy, std::span<const TaskSpec> tasks,
                                               int n_episodes, std::uint64_t seed, const RolloutOptions& options = {});

// One record per step of an expert plan from the task's initial state.
std::vector<TransitionRecord> expert_transitions(const TaskSpec& task, std::span<const Action> plan);

std::string world_model_to_json(const WorldModelParams& wm);
WorldModelParams world_model_from_json(const std::string& text);

}  // namespace itp
