#pragma once

// Imagined rollouts on the world model, reflection over them, and the
// single decision step that ties controller, imagination and policy together.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itp/agent.hpp"
#include "itp/controller.hpp"
#include "itp/env.hpp"
#include "itp/rng.hpp"
#include "itp/world_model.hpp"

namespace itp {

// none: all requested steps were imagined. horizon_end: the imagined chain hit
// the task's step limit. diverged: a predicted state does not describe this
// task, so no further policy step is possible.
enum class Truncation : std::uint8_t { none, predicted_done, horizon_end, expert_exhausted, diverged };
std::string_view truncation_name(Truncation t);

struct ImaginedStep {
    Action action;
    std::string action_text;
    std::string predicted_state;
    double predicted_reward = 0.0;
    bool predicted_done = false;
    bool operator==(const ImaginedStep&) const = default;
};

struct ImaginedTrajectory {
    std::string start_state;
    std::vector<ImaginedStep> steps;
    int requested_k = 0;
    Truncation truncated_reason = Truncation::none;
    bool operator==(const ImaginedTrajectory&) const = default;
};

// Compact "action -> state" hop rendering used in the k-label files.
std::string lookahead_summary_text(const ImaginedTrajectory& traj);

struct BudgetMeter {
    std::int64_t policy_calls = 0;
    std::int64_t wm_calls = 0;
    double unit_cost_policy = 1.0;
    double unit_cost_wm = 1.0;
    double total() const {
        return static_cast<double>(policy_calls) * unit_cost_policy + static_cast<double>(wm_calls) * unit_cost_wm;
    }
};

enum class ActionSelection : std::uint8_t { sample, greedy };

// Independent random streams for one episode, so that changing the horizon
// does not perturb the action-sampling stream.
struct EpisodeStreams {
    Rng control;
    Rng imagine;
    Rng act;
    explicit EpisodeStreams(std::uint64_t seed);
};

struct StepRecord {
    EnvState state;
    int sampled_k = 0;
    ImaginedTrajectory trajectory;
    std::optional<ReflectionSummary> summary;
    Action action;
    double shaped_reward = 0.0;
    double env_reward = 0.0;
    bool valid = true;
    EnvState next_state;
    bool done = false;
    double log_prob_k = 0.0;
    double log_prob_action = 0.0;
    double value_estimate = 0.0;
    std::int64_t policy_calls = 0;  // meter increments caused by this step
    std::int64_t wm_calls = 0;
};

ImaginedTrajectory imagine_policy_rollout(const AgentParams& params, const NoisyWorldModel& wm, const EnvState& state,
                                          const TaskSpec& task, int k, BudgetMeter& meter, Rng& rng,
                                          ActionSelection selection = ActionSelection::sample);

// Feeds the next min(k, expert_actions.size()) expert actions through the world model.
ImaginedTrajectory imagine_teacher_forced(const NoisyWorldModel& wm, const EnvState& state, const TaskSpec& task,
                                          std::span<const Action> expert_actions, int k, BudgetMeter& meter, Rng& rng);

ReflectionSummary reflect(const ImaginedTrajectory& traj, const TaskSpec& task);

StepRecord poimdp_step(const AgentParams& params, const NoisyWorldModel& wm, const EnvState& env_state,
                       const TaskSpec& task, const LookaheadController& controller, BudgetMeter& meter,
                       EpisodeStreams& streams, ActionSelection selection = ActionSelection::sample);

}  // namespace itp
