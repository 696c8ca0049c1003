#pragma once

// Hand-built instances and independent oracles shared by the test programs.
// The oracles restate the environment rules from scratch rather than calling
// into the library, so agreement is evidence and not a tautology.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "itp/env.hpp"
#include "itp/world_model.hpp"

namespace itp::testing {

// Two rooms and a hallway. Room 0 holds cabinet, table and microwave; room 1
// holds a sofa and a desk lamp. The mug starts in the cabinet, the book on the
// sofa, and the agent in the hallway. Goal: mug on the table.
inline TaskSpec two_room_task(int max_steps = 20) {
    TaskSpec t;
    t.family = Family::PICK;
    t.instance_seed = 0;
    t.locations = {"cabinet_1", "table_1", "microwave_1", "sofa_1", "desk_1", "hallway_1"};
    t.rooms = {0, 0, 0, 1, 1, -1};
    t.objects = {"mug_1", "book_1"};
    t.initial_object_locations = {0, 3};
    t.initial_agent_location = 5;
    t.goal.targets = {0};
    t.goal.destination = 1;
    t.goal.subgoals = {Subgoal{SubgoalKind::place, {0}, 1, 1}};
    t.max_steps = max_steps;
    finalize_task(t);
    return t;
}

struct OracleOutcome {
    EnvState next;
    double reward = 0.0;
    bool done = false;
    bool valid = false;
};

inline std::string fixture_kind(const std::string& name) {
    const std::string kind = name.substr(0, name.find('_'));
    if (kind == "sink" || kind == "basin") return "sink";
    if (kind == "microwave" || kind == "stove") return "heater";
    if (kind == "fridge" || kind == "freezer") return "cooler";
    if (kind == "desk" || kind == "floorlamp") return "lamp";
    if (kind == "hallway") return "hallway";
    return "plain";
}

inline bool oracle_valid(const EnvState& s, const Action& a, const TaskSpec& t) {
    const int nl = static_cast<int>(t.locations.size());
    const int no = static_cast<int>(t.objects.size());
    const std::string here = fixture_kind(t.locations[static_cast<std::size_t>(s.agent_location)]);
    const bool obj = a.arg0 >= 0 && a.arg0 < no;
    const bool holding_it = obj && s.holding == a.arg0;
    switch (a.verb) {
        case Verb::goto_: {
            if (a.arg0 < 0 || a.arg0 >= nl || a.arg0 == s.agent_location) return false;
            const int r1 = t.rooms[static_cast<std::size_t>(s.agent_location)];
            const int r2 = t.rooms[static_cast<std::size_t>(a.arg0)];
            return r1 == r2 || r1 == -1 || r2 == -1;
        }
        case Verb::take:
            return obj && s.holding == -1 && s.object_locations[static_cast<std::size_t>(a.arg0)] == s.agent_location;
        case Verb::put: return holding_it && a.arg1 == s.agent_location && here != "hallway";
        case Verb::clean: return holding_it && here == "sink";
        case Verb::heat: return holding_it && here == "heater";
        case Verb::cool: return holding_it && here == "cooler";
        case Verb::toggle: return a.arg0 == s.agent_location && here == "lamp";
        case Verb::examine: return holding_it && s.light_on;
        case Verb::noop: return false;
    }
    return false;
}

inline bool oracle_subgoal_holds(const Subgoal& g, const EnvState& s) {
    auto has = [&](std::uint8_t bit) { return (s.object_attrs[static_cast<std::size_t>(g.objects[0])] & bit) != 0; };
    switch (g.kind) {
        case SubgoalKind::hold: return std::count(g.objects.begin(), g.objects.end(), s.holding) > 0;
        case SubgoalKind::clean: return has(attr::clean);
        case SubgoalKind::heat: return has(attr::hot);
        case SubgoalKind::cool: return has(attr::cold);
        case SubgoalKind::examine: return has(attr::examined);
        case SubgoalKind::light: return s.light_on;
        case SubgoalKind::place:
            return std::count_if(g.objects.begin(), g.objects.end(), [&](int o) {
                       return s.object_locations[static_cast<std::size_t>(o)] == g.location;
                   }) >= g.count;
    }
    return false;
}

inline OracleOutcome oracle_step(const EnvState& s, const Action& a, const TaskSpec& t) {
    OracleOutcome out;
    out.next = s;
    out.next.step_count += 1;
    const bool timeout = out.next.step_count == t.max_steps;
    if (!oracle_valid(s, a, t)) {
        out.done = timeout;
        return out;
    }
    out.valid = true;
    const bool at_faulty = std::count(t.faulty.begin(), t.faulty.end(), s.agent_location) > 0;
    const bool operates = a.verb == Verb::clean || a.verb == Verb::heat || a.verb == Verb::cool || a.verb == Verb::toggle;
    if (at_faulty && operates) {
        out.done = true;
        return out;
    }
    auto& n = out.next;
    const auto o = static_cast<std::size_t>(std::max(a.arg0, 0));
    switch (a.verb) {
        case Verb::goto_: n.agent_location = a.arg0; break;
        case Verb::take: n.holding = a.arg0; n.object_locations[o] = kHeld; break;
        case Verb::put: n.holding = -1; n.object_locations[o] = a.arg1; break;
        case Verb::clean: n.object_attrs[o] |= attr::clean; break;
        case Verb::heat: n.object_attrs[o] = static_cast<std::uint8_t>((n.object_attrs[o] | attr::hot) & ~attr::cold); break;
        case Verb::cool: n.object_attrs[o] = static_cast<std::uint8_t>((n.object_attrs[o] | attr::cold) & ~attr::hot); break;
        case Verb::toggle: n.light_on = !n.light_on; break;
        case Verb::examine: n.object_attrs[o] |= attr::examined; break;
        case Verb::noop: break;
    }
    const auto& goals = t.goal.subgoals;
    std::size_t i = 0;
    while (i < goals.size() && n.satisfied_subgoals[i]) ++i;
    const bool was_done = i == goals.size();
    while (i < goals.size() && oracle_subgoal_holds(goals[i], n)) n.satisfied_subgoals[i++] = 1;
    const bool success = !was_done && i == goals.size();
    out.reward = success ? 1.0 : 0.0;
    out.done = success || timeout;
    return out;
}

inline std::string oracle_key(const EnvState& s) {
    std::string k = std::to_string(s.agent_location) + "|" + std::to_string(s.holding) + "|" + (s.light_on ? "1" : "0");
    for (int l : s.object_locations) k += "," + std::to_string(l);
    for (auto a : s.object_attrs) k += ";" + std::to_string(a);
    k += "|";
    for (auto b : s.satisfied_subgoals) k += b ? '1' : '0';
    return k;
}

// Every syntactically formable action, generated independently of the task's catalog.
inline std::vector<Action> oracle_actions(const TaskSpec& t) {
    std::vector<Action> out;
    const int nl = static_cast<int>(t.locations.size());
    const int no = static_cast<int>(t.objects.size());
    for (int l = 0; l < nl; ++l) out.push_back({Verb::goto_, l, -1});
    for (int l = 0; l < nl; ++l) out.push_back({Verb::toggle, l, -1});
    for (int o = 0; o < no; ++o) {
        for (Verb v : {Verb::take, Verb::clean, Verb::heat, Verb::cool, Verb::examine}) out.push_back({v, o, -1});
        for (int l = 0; l < nl; ++l) out.push_back({Verb::put, o, l});
    }
    return out;
}

// Shortest number of steps to the goal by breadth-first search over oracle
// transitions, ignoring the step limit. nullopt if unreachable within max_depth.
inline std::optional<int> oracle_distance(const EnvState& start, const TaskSpec& t, int max_depth = 60) {
    std::deque<std::pair<EnvState, int>> frontier{{start, 0}};
    std::set<std::string> seen{oracle_key(start)};
    TaskSpec unlimited = t;
    unlimited.max_steps = 1 << 30;
    const auto actions = oracle_actions(t);
    while (!frontier.empty()) {
        auto [s, d] = frontier.front();
        frontier.pop_front();
        if (d >= max_depth) continue;
        for (const auto& a : actions) {
            auto r = oracle_step(s, a, unlimited);
            if (!r.valid) continue;
            if (r.reward > 0.0) return d + 1;
            if (r.done) continue;
            if (seen.insert(oracle_key(r.next)).second) frontier.push_back({r.next, d + 1});
        }
    }
    return std::nullopt;
}

// Table of counts built directly from records: key -> next_state -> count.
inline std::map<std::string, std::map<std::string, int>> count_table(const std::vector<TransitionRecord>& data) {
    std::map<std::string, std::map<std::string, int>> out;
    for (const auto& r : data) ++out[r.state + "\n" + r.action][r.next_state];
    return out;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

}  // namespace itp::testing
