#include "itp/imagination.hpp"

#include <algorithm>
#include <cmath>

#include "itp/errors.hpp"

namespace itp {

namespace {

std::size_t pick_action(const PolicyEval& ev, ActionSelection selection, Rng& rng) {
    if (selection == ActionSelection::greedy)
        return static_cast<std::size_t>(std::max_element(ev.probs.begin(), ev.probs.end()) - ev.probs.begin());
    return rng.categorical(ev.probs);
}

}  // namespace

std::string_view truncation_name(Truncation t) {
    switch (t) {
        case Truncation::none: return "none";
        case Truncation::predicted_done: return "predicted_done";
        case Truncation::horizon_end: return "horizon_end";
        case Truncation::expert_exhausted: return "expert_exhausted";
        case Truncation::diverged: return "diverged";
    }
    return "none";
}

std::string lookahead_summary_text(const ImaginedTrajectory& traj) {
    std::string out;
    for (const auto& s : traj.steps) {
        if (!out.empty()) out += " ; ";
        out += s.action_text + " -> " + s.predicted_state;
    }
    return out;
}

EpisodeStreams::EpisodeStreams(std::uint64_t seed)
    : control(derive_seed(seed, "control")), imagine(derive_seed(seed, "imagine")), act(derive_seed(seed, "act")) {}

ImaginedTrajectory imagine_policy_rollout(const AgentParams& params, const NoisyWorldModel& wm, const EnvState& state,
                                          const TaskSpec& task, int k, BudgetMeter& meter, Rng& rng,
                                          ActionSelection selection) {
    ImaginedTrajectory traj;
    traj.start_state = canonical_string(state, task);
    traj.requested_k = k;
    EnvState cur = state;
    std::string cur_text = traj.start_state;
    for (int i = 0; i < k; ++i) {
        if (cur.step_count >= task.max_steps) {
            traj.truncated_reason = Truncation::horizon_end;
            break;
        }
        const ReflectionSummary partial = reflect(traj, task);
        const auto ev = policy_distribution(params, cur, task, partial);
        const Action a = ev.actions[pick_action(ev, selection, rng)];
        meter.policy_calls += 1;
        ImaginedStep step;
        step.action = a;
        step.action_text = action_string(a, task);
        auto pred = predict_next(wm, cur_text, step.action_text, rng);
        meter.wm_calls += 1;
        step.predicted_state = std::move(pred.next_state);
        step.predicted_reward = pred.reward;
        step.predicted_done = pred.done;
        traj.steps.push_back(step);
        if (step.predicted_done) {
            traj.truncated_reason = Truncation::predicted_done;
            break;
        }
        if (i + 1 == k) break;
        try {
            cur = parse_state(traj.steps.back().predicted_state, task, cur.step_count + 1);
        } catch (const UnparseableState&) {
            traj.truncated_reason = Truncation::diverged;
            break;
        }
        cur_text = traj.steps.back().predicted_state;
    }
    return traj;
}

ImaginedTrajectory imagine_teacher_forced(const NoisyWorldModel& wm, const EnvState& state, const TaskSpec& task,
                                          std::span<const Action> expert_actions, int k, BudgetMeter& meter,
                                          Rng& rng) {
    ImaginedTrajectory traj;
    traj.start_state = canonical_string(state, task);
    traj.requested_k = k;
    const int n = std::min<int>(k, static_cast<int>(expert_actions.size()));
    std::string cur = traj.start_state;
    for (int i = 0; i < n; ++i) {
        ImaginedStep step;
        step.action = expert_actions[static_cast<std::size_t>(i)];
        step.action_text = action_string(step.action, task);
        auto pred = predict_next(wm, cur, step.action_text, rng);
        meter.wm_calls += 1;
        step.predicted_state = std::move(pred.next_state);
        step.predicted_reward = pred.reward;
        step.predicted_done = pred.done;
        cur = step.predicted_state;
        traj.steps.push_back(std::move(step));
        if (traj.steps.back().predicted_done) {
            traj.truncated_reason = Truncation::predicted_done;
            return traj;
        }
    }
    if (n < k) traj.truncated_reason = Truncation::expert_exhausted;
    return traj;
}

ReflectionSummary reflect(const ImaginedTrajectory& traj, const TaskSpec& task) {
    ReflectionSummary out;
    if (traj.steps.empty()) return out;
    out.first_imagined_action = traj.steps.front().action;

    std::vector<const std::string*> seen{&traj.start_state};
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const auto& s = traj.steps[i];
        if (!out.reaches_goal && s.predicted_done && s.predicted_reward == 1.0) {
            out.reaches_goal = true;
            out.steps_to_goal = static_cast<int>(i) + 1;
        }
        const bool echo = s.predicted_state == *seen.back() && s.action.verb != Verb::noop;
        const bool revisit =
            std::any_of(seen.begin(), seen.end(), [&](const std::string* p) { return *p == s.predicted_state; });
        if (echo || revisit) out.conflict_flag = true;
        seen.push_back(&s.predicted_state);
    }

    double start_progress = 0.0;
    try {
        start_progress = subgoal_progress(parse_state(traj.start_state, task), task);
    } catch (const UnparseableState&) {
        return out;
    }
    double last_progress = start_progress;
    for (const auto& s : traj.steps) {
        try {
            last_progress = subgoal_progress(parse_state(s.predicted_state, task), task);
        } catch (const UnparseableState&) {
            break;
        }
    }
    out.progress_delta = last_progress - start_progress;
    return out;
}

StepRecord poimdp_step(const AgentParams& params, const NoisyWorldModel& wm, const EnvState& env_state,
                       const TaskSpec& task, const LookaheadController& controller, BudgetMeter& meter,
                       EpisodeStreams& streams, ActionSelection selection) {
    StepRecord rec;
    rec.state = env_state;
    const auto policy_before = meter.policy_calls;
    const auto wm_before = meter.wm_calls;

    const auto state_features = encode_state(env_state, task);
    const auto k_probs = k_distribution(params, state_features.values);
    rec.sampled_k = select_k(controller, params, env_state, task, streams.control);
    rec.log_prob_k = std::log(k_probs[static_cast<std::size_t>(rec.sampled_k)]);
    rec.value_estimate = dot(params.value_weights, state_features.values);

    rec.trajectory = imagine_policy_rollout(params, wm, env_state, task, rec.sampled_k, meter, streams.imagine, selection);
    if (rec.sampled_k > 0) rec.summary = reflect(rec.trajectory, task);

    const auto ev = policy_distribution(params, env_state, task, rec.summary);
    const std::size_t idx = pick_action(ev, selection, streams.act);
    meter.policy_calls += 1;
    rec.action = ev.actions[idx];
    rec.log_prob_action = std::log(ev.probs[idx]);

    auto out = env_step(env_state, rec.action, task);
    rec.env_reward = out.reward;
    rec.valid = out.valid;
    rec.done = out.done;
    rec.next_state = std::move(out.next_state);
    rec.policy_calls = meter.policy_calls - policy_before;
    rec.wm_calls = meter.wm_calls - wm_before;
    return rec;
}

}  // namespace itp
