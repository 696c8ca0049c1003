#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "itp/evaluation.hpp"
#include "itp/imagination.hpp"
#include "stack.hpp"
#include "support.hpp"

using namespace itp;
using namespace itp::testing;

namespace {

NoisyWorldModel exact_model(const std::vector<TaskSpec>& tasks) { return expert_path_model(tasks, 5); }

// Knows a single unrelated transition, so every real query falls back to a self-loop.
NoisyWorldModel echo_model() {
    const std::vector<TransitionRecord> one{{"elsewhere", "noop", "elsewhere", 0.0, false}};
    return {std::make_shared<const WorldModelParams>(fit_world_model(one)), 0.0, 1};
}

AgentParams cloned(const std::vector<TaskSpec>& tasks) {
    TrainConfig cfg;
    cfg.epochs_bc = 300;
    return behavior_clone(make_expert_episodes(tasks), cfg);
}

std::vector<TaskSpec> house_tasks(int n, std::uint64_t seed) {
    RunConfig cfg = default_config(Benchmark::house);
    cfg.n_expert_tasks = n;
    cfg.seed = seed;
    return make_task_pool(cfg);
}

}  // namespace

TEST_CASE("k = 0 imagines nothing") {
    const auto t = two_room_task();
    const auto s = reset(t).first;
    BudgetMeter meter;
    Rng rng(1);
    const auto traj = imagine_policy_rollout(AgentParams::zeros(5), exact_model({t}), s, t, 0, meter, rng);
    CHECK(traj.steps.empty());
    CHECK(meter.policy_calls == 0);
    CHECK(meter.wm_calls == 0);
    CHECK(reflect(traj, t) == ReflectionSummary{});
}

TEST_CASE("policy rollouts on an exact model follow the real environment") {
    const auto tasks = house_tasks(12, 3);
    const auto wm = exact_model(tasks);
    const auto params = cloned(tasks);
    for (const auto& t : tasks) {
        auto s = reset(t).first;
        for (int k = 1; k <= 5; ++k) {
            BudgetMeter meter;
            Rng rng(static_cast<std::uint64_t>(k));
            const auto traj = imagine_policy_rollout(params, wm, s, t, k, meter, rng, ActionSelection::greedy);
            EnvState real = s;
            for (const auto& step : traj.steps) {
                const auto out = env_step(real, step.action, t);
                REQUIRE(step.predicted_state == canonical_string(out.next_state, t));
                REQUIRE(step.predicted_reward == out.reward);
                real = out.next_state;
            }
            CHECK(meter.wm_calls == static_cast<std::int64_t>(traj.steps.size()));
            CHECK(meter.policy_calls == static_cast<std::int64_t>(traj.steps.size()));
        }
    }
}

TEST_CASE("k = 3 costs three policy calls and three model calls") {
    const auto t = two_room_task();
    BudgetMeter meter;
    Rng rng(5);
    // the goal needs four actions, so nothing can end a three-step rollout early
    const auto traj = imagine_policy_rollout(AgentParams::zeros(5), exact_model({t}), reset(t).first, t, 3, meter, rng);
    CHECK(traj.steps.size() == 3);
    CHECK(traj.truncated_reason == Truncation::none);
    CHECK(meter.policy_calls == 3);
    CHECK(meter.wm_calls == 3);
}

TEST_CASE("teacher forcing") {
    const auto tasks = house_tasks(16, 4);
    const auto wm = exact_model(tasks);
    NoisyWorldModel noisy = wm;
    noisy.epsilon = 0.3;
    int checked = 0;
    for (const auto& e : make_expert_episodes(tasks)) {
        auto s = reset(e.task).first;
        for (std::size_t i = 0; i < e.plan.size(); ++i, ++checked) {
            const std::span<const Action> rest(e.plan.data() + i, e.plan.size() - i);
            BudgetMeter meter;
            Rng rng(7);
            const auto full = imagine_teacher_forced(wm, s, e.task, rest, 5, meter, rng);
            // truncation when the plan runs out
            if (rest.size() < 5) {
                CHECK(full.steps.size() == rest.size());
                CHECK(full.truncated_reason ==
                      (full.steps.back().predicted_done ? Truncation::predicted_done : Truncation::expert_exhausted));
            }
            // exact model reproduces the true states
            EnvState real = s;
            for (const auto& st : full.steps) {
                real = env_step(real, st.action, e.task).next_state;
                CHECK(st.predicted_state == canonical_string(real, e.task));
            }
            // shorter horizons are prefixes of longer ones, even with noise
            BudgetMeter m1;
            Rng r1(11);
            const auto longest = imagine_teacher_forced(noisy, s, e.task, rest, 5, m1, r1);
            for (int k = 0; k < 5; ++k) {
                BudgetMeter m2;
                Rng r2(11);
                const auto shorter = imagine_teacher_forced(noisy, s, e.task, rest, k, m2, r2);
                REQUIRE(shorter.steps.size() <= longest.steps.size());
                CHECK(std::equal(shorter.steps.begin(), shorter.steps.end(), longest.steps.begin()));
            }
            s = env_step(s, e.plan[i], e.task).next_state;
        }
    }
    CHECK(checked >= 100);
}

TEST_CASE("reflect") {
    const auto t = two_room_task();
    const auto wm = exact_model({t});
    const auto holding = [&] {
        auto s = reset(t).first;
        for (const char* a : {"goto cabinet_1", "take mug_1"}) s = env_step(s, parse_action(a, t), t).next_state;
        return s;
    }();

    SUBCASE("goal reached on the second imagined step") {
        const std::vector<Action> plan{parse_action("goto table_1", t), parse_action("put mug_1 table_1", t)};
        BudgetMeter meter;
        Rng rng(1);
        const auto r = reflect(imagine_teacher_forced(wm, holding, t, plan, 2, meter, rng), t);
        CHECK(r.reaches_goal);
        CHECK(r.steps_to_goal == 2);
        CHECK_FALSE(r.conflict_flag);
        CHECK(r.progress_delta == 1.0);
        CHECK(r.first_imagined_action == plan[0]);
    }

    SUBCASE("an imagined take that leaves the state unchanged is a conflict") {
        auto at_cabinet = reset(t).first;
        at_cabinet = env_step(at_cabinet, parse_action("goto cabinet_1", t), t).next_state;
        ImaginedTrajectory traj;
        traj.start_state = canonical_string(at_cabinet, t);
        ImaginedStep step;
        step.action = parse_action("take mug_1", t);
        step.action_text = "take mug_1";
        step.predicted_state = traj.start_state;
        traj.steps.push_back(step);
        const auto r = reflect(traj, t);
        CHECK(r.conflict_flag);
        CHECK_FALSE(r.reaches_goal);
        CHECK(r.progress_delta == 0.0);
    }
}

TEST_CASE("controllers and budget accounting") {
    const auto tasks = house_tasks(18, 5);
    const auto params = cloned(tasks);
    // Echoed states never end an imagined chain, so only the step limit truncates it.
    const auto wm = echo_model();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = tasks[i];
        const auto reactive = run_episode(t, params, wm, LookaheadController::reactive(), i);
        const auto fixed0 = run_episode(t, params, wm, LookaheadController::fixed(0), i);
        CHECK(reactive.policy_calls == fixed0.policy_calls);
        CHECK(reactive.wm_calls == 0);
        CHECK(fixed0.success == reactive.success);
        CHECK(fixed0.steps == reactive.steps);
        for (int k = 1; k <= 5; ++k) {
            const auto r = run_episode(t, params, wm, LookaheadController::fixed(k), i);
            std::int64_t expect = 0;
            for (int step = 0; step < r.steps; ++step) expect += std::min(k, t.max_steps - step);
            CHECK(r.wm_calls == expect);
            CHECK(r.policy_calls == expect + r.steps);
            CHECK(r.total_budget_units == static_cast<double>(r.wm_calls + r.policy_calls));
        }
    }
}

TEST_CASE("poimdp_step") {
    const auto tasks = house_tasks(12, 6);
    const auto params = cloned(tasks);
    auto play = [&](const NoisyWorldModel& wm, std::size_t i, BudgetMeter& meter) {
        const auto& t = tasks[i];
        EpisodeStreams streams(i);
        std::vector<StepRecord> out;
        auto s = reset(t).first;
        for (int step = 0; step < t.max_steps; ++step) {
            const auto before = s;
            out.push_back(poimdp_step(params, wm, s, t, LookaheadController::fixed(1 + step % 5), meter, streams));
            CHECK(s == before);
            if (out.back().done) break;
            s = out.back().next_state;
        }
        return out;
    };
    const auto wm = closed_exact_model(tasks, 5, [&](const NoisyWorldModel& m, std::size_t i) {
        BudgetMeter meter;
        std::vector<EnvState> visited;
        for (const auto& r : play(m, i, meter)) visited.push_back(r.next_state);
        return visited;
    });

    int agreeing = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        BudgetMeter meter;
        meter.unit_cost_policy = 0.25;
        meter.unit_cost_wm = 2.0;
        std::int64_t policy_sum = 0, wm_sum = 0;
        for (const auto& rec : play(wm, i, meter)) {
            policy_sum += rec.policy_calls;
            wm_sum += rec.wm_calls;
            CHECK(rec.policy_calls == static_cast<std::int64_t>(rec.trajectory.steps.size()) + 1);
            CHECK(rec.wm_calls == static_cast<std::int64_t>(rec.trajectory.steps.size()));
            if (!rec.trajectory.steps.empty() && rec.trajectory.steps.front().action == rec.action) {
                CHECK(rec.trajectory.steps.front().predicted_state == canonical_string(rec.next_state, tasks[i]));
                ++agreeing;
            }
        }
        CHECK(meter.policy_calls == policy_sum);
        CHECK(meter.wm_calls == wm_sum);
        CHECK(meter.total() == doctest::Approx(0.25 * static_cast<double>(policy_sum) + 2.0 * static_cast<double>(wm_sum)));
    }
    CHECK(agreeing > 20);
}

TEST_CASE("a trained adaptive controller varies its horizon on CLEAN tasks") {
    const auto stack = build_stack(default_config(Benchmark::house));
    const auto wm = stack.noisy(stack.cfg.wm_epsilon);
    std::set<int> ks;
    int episodes = 0;
    for (std::size_t i = 0; i < stack.tasks.size() && episodes < 20; ++i) {
        if (stack.tasks[i].family != Family::CLEAN) continue;
        const auto r = run_episode(stack.tasks[i], stack.rl, wm, LookaheadController::learned(), i);
        ks.insert(r.per_step_k.begin(), r.per_step_k.end());
        ++episodes;
    }
    CHECK(episodes == 20);
    MESSAGE("distinct horizons: " << ks.size());
    CHECK(ks.size() >= 2);
}
