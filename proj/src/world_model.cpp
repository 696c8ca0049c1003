#include "itp/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "itp/errors.hpp"

namespace itp {

std::string transition_key(std::string_view state, std::string_view action) {
    std::string k;
    k.reserve(state.size() + action.size() + 1);
    k.append(state);
    k.push_back('\n');
    k.append(action);
    return k;
}

WorldModelParams fit_world_model(std::span<const TransitionRecord> data, double alpha, Fallback fallback) {
    if (data.empty()) throw EmptyDataset("cannot fit a world model on an empty dataset");
    WorldModelParams wm;
    wm.smoothing_alpha = alpha;
    wm.fallback = fallback;
    std::set<std::string> states;
    for (const auto& r : data) {
        auto& entries = wm.table[transition_key(r.state, r.action)];
        auto it = std::find_if(entries.begin(), entries.end(), [&](const Successor& s) {
            return s.next_state == r.next_state && s.reward == r.reward && s.done == r.done;
        });
        if (it == entries.end())
            entries.push_back({r.next_state, r.reward, r.done, 1.0});
        else
            it->count += 1.0;
        states.insert(r.state);
        states.insert(r.next_state);
    }
    for (auto& [_, entries] : wm.table)
        std::sort(entries.begin(), entries.end(), [](const Successor& a, const Successor& b) {
            if (a.next_state != b.next_state) return a.next_state < b.next_state;
            if (a.reward != b.reward) return a.reward < b.reward;
            return a.done < b.done;
        });
    wm.observed_states.assign(states.begin(), states.end());
    return wm;
}

std::vector<double> successor_probabilities(const WorldModelParams& wm, const std::vector<Successor>& entries) {
    double total = 0.0;
    for (const auto& e : entries) total += e.count;
    const double denom = total + wm.smoothing_alpha * static_cast<double>(entries.size());
    std::vector<double> p;
    p.reserve(entries.size());
    for (const auto& e : entries) p.push_back((e.count + wm.smoothing_alpha) / denom);
    return p;
}

Prediction predict_next(const WorldModelParams& wm, const std::string& state, const std::string& action, Rng& rng) {
    const auto it = wm.table.find(transition_key(state, action));
    if (it == wm.table.end()) {
        if (wm.fallback == Fallback::error) throw UnseenTransition("unseen transition for action " + action);
        return {state, 0.0, false};
    }
    const auto& entries = it->second;
    if (entries.size() == 1) return {entries[0].next_state, entries[0].reward, entries[0].done};
    const auto p = successor_probabilities(wm, entries);
    const auto& e = entries[rng.categorical(p)];
    return {e.next_state, e.reward, e.done};
}

Prediction predict_next(const NoisyWorldModel& wm, const std::string& state, const std::string& action, Rng& rng) {
    Prediction out = predict_next(*wm.inner, state, action, rng);
    if (wm.epsilon <= 0.0 || wm.inner->observed_states.empty()) return out;
    Rng noise(wm.noise_seed ^ rng.next());
    if (noise.uniform() < wm.epsilon) {
        const auto& pool = wm.inner->observed_states;
        out.next_state = pool[noise.below(pool.size())];
    }
    return out;
}

double wm_log_likelihood(const WorldModelParams& wm, const std::string& state, const std::string& action,
                         const std::string& next_state) {
    const auto it = wm.table.find(transition_key(state, action));
    if (it == wm.table.end()) {
        if (wm.fallback == Fallback::self_loop && next_state == state) return 0.0;
        return kLogZero;
    }
    const auto p = successor_probabilities(wm, it->second);
    double mass = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (it->second[i].next_state == next_state) mass += p[i];
    return mass > 0.0 ? std::log(mass) : kLogZero;
}

double total_nll(const WorldModelParams& wm, std::span<const TransitionRecord> data) {
    double nll = 0.0;
    for (const auto& r : data) nll -= wm_log_likelihood(wm, r.state, r.action, r.next_state);
    return nll;
}

std::vector<TransitionRecord> collect_rollouts(const AgentParams& policy, std::span<const TaskSpec> tasks,
                                               int n_episodes, std::uint64_t seed, const RolloutOptions& options) {
    if (n_episodes <= 0) throw Error("collect_rollouts requires n_episodes > 0");
    if (tasks.empty()) throw Error("collect_rollouts requires at least one task");
    AgentParams explorer = policy;
    explorer.temperature = options.temperature;
    std::vector<TransitionRecord> out;
    for (int ep = 0; ep < n_episodes; ++ep) {
        const TaskSpec& task = tasks[static_cast<std::size_t>(ep) % tasks.size()];
        Rng rng(derive_seed(seed, "rollout", static_cast<std::uint64_t>(ep)));
        auto [state, obs] = reset(task);
        bool done = false;
        while (!done) {
            Action a;
            if (rng.uniform() < options.invalid_action_rate) {
                std::vector<Action> invalid;
                for (const auto& c : task.action_catalog)
                    if (!is_valid(state, c, task)) invalid.push_back(c);
                a = invalid[rng.below(invalid.size())];
            } else {
                const auto ev = policy_distribution(explorer, state, task, std::nullopt);
                a = ev.actions[rng.categorical(ev.probs)];
            }
            auto step = env_step(state, a, task);
            const bool success = step.reward > 0.0;
            out.push_back({obs, action_string(a, task), canonical_string(step.next_state, task), step.reward, success});
            done = step.done;
            obs = canonical_string(step.next_state, task);
            state = std::move(step.next_state);
        }
    }
    return out;
}

std::vector<TransitionRecord> expert_transitions(const TaskSpec& task, std::span<const Action> plan) {
    std::vector<TransitionRecord> out;
    auto [state, obs] = reset(task);
    for (const auto& a : plan) {
        auto step = env_step(state, a, task);
        auto next_obs = canonical_string(step.next_state, task);
        out.push_back({obs, action_string(a, task), next_obs, step.reward, step.reward > 0.0});
        obs = std::move(next_obs);
        state = std::move(step.next_state);
    }
    return out;
}

std::string world_model_to_json(const WorldModelParams& wm) {
    nlohmann::json j;
    j["format"] = "itp-world-model";
    j["smoothing_alpha"] = wm.smoothing_alpha;
    j["fallback"] = wm.fallback == Fallback::self_loop ? "self_loop" : "error";
    const std::map<std::string, std::vector<Successor>> ordered(wm.table.begin(), wm.table.end());
    auto& entries = j["entries"] = nlohmann::json::array();
    for (const auto& [key, succ] : ordered) {
        const auto nl = key.find('\n');
        nlohmann::json e;
        e["state"] = key.substr(0, nl);
        e["action"] = key.substr(nl + 1);
        for (const auto& s : succ)
            e["successors"].push_back(
                {{"next_state", s.next_state}, {"reward", s.reward}, {"done", s.done}, {"count", s.count}});
        entries.push_back(std::move(e));
    }
    j["observed_states"] = wm.observed_states;
    return j.dump();
}

WorldModelParams world_model_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "itp-world-model") throw ConfigError("not a world-model checkpoint");
    WorldModelParams wm;
    wm.smoothing_alpha = j.at("smoothing_alpha").get<double>();
    wm.fallback = j.at("fallback").get<std::string>() == "error" ? Fallback::error : Fallback::self_loop;
    for (const auto& e : j.at("entries")) {
        auto& succ = wm.table[transition_key(e.at("state").get<std::string>(), e.at("action").get<std::string>())];
        for (const auto& s : e.at("successors"))
            succ.push_back({s.at("next_state").get<std::string>(), s.at("reward").get<double>(),
                            s.at("done").get<bool>(), s.at("count").get<double>()});
    }
    wm.observed_states = j.at("observed_states").get<std::vector<std::string>>();
    return wm;
}

}  // namespace itp
