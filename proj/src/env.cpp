#include "itp/env.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_set>

#include "itp/errors.hpp"
#include "itp/rng.hpp"

namespace itp {

namespace {

constexpr std::array<std::string_view, kNumFamilies> kFamilyNames{"PICK", "CLEAN", "HEAT", "COOL",
                                                                  "LOOK", "PICK2", "LAB_CHAIN"};
constexpr std::array<std::string_view, kNumVerbs> kVerbNames{
    "goto", "take", "put", "clean", "heat", "cool", "toggle", "examine", "noop"};

constexpr std::array<std::string_view, 7> kHouseReceptacles{"cabinet", "countertop", "drawer", "shelf",
                                                            "table",   "sofa",       "desk"};
constexpr std::array<std::string_view, 4> kHouseDestinations{"cabinet", "countertop", "shelf", "table"};
constexpr std::array<std::string_view, 8> kHouseObjects{"apple", "book", "bowl",   "cup",
                                                        "mug",   "pen",  "plate", "potato"};
constexpr std::array<std::string_view, 4> kLabReceptacles{"bench", "cabinet", "shelf", "table"};
constexpr std::array<std::string_view, 6> kLabObjects{"battery", "beaker", "flask",
                                                      "magnet",  "sample", "seed"};

// Search cap used when checking solvability at generation time.
constexpr int kGenerationDepthCap = 40;

bool subgoal_holds(const Subgoal& g, const EnvState& s) {
    switch (g.kind) {
        case SubgoalKind::hold:
            return std::find(g.objects.begin(), g.objects.end(), s.holding) != g.objects.end();
        case SubgoalKind::clean: return (s.object_attrs[g.objects[0]] & attr::clean) != 0;
        case SubgoalKind::heat: return (s.object_attrs[g.objects[0]] & attr::hot) != 0;
        case SubgoalKind::cool: return (s.object_attrs[g.objects[0]] & attr::cold) != 0;
        case SubgoalKind::examine: return (s.object_attrs[g.objects[0]] & attr::examined) != 0;
        case SubgoalKind::light: return s.light_on;
        case SubgoalKind::place: {
            int n = 0;
            for (int o : g.objects)
                if (s.object_locations[o] == g.location) ++n;
            return n >= g.count;
        }
    }
    return false;
}

// Latches sub-goals in order; returns true if the final one latched in this call.
bool latch_subgoals(EnvState& s, const TaskSpec& task) {
    const auto& goals = task.goal.subgoals;
    std::size_t i = static_cast<std::size_t>(satisfied_count(s));
    const bool was_done = i == goals.size();
    while (i < goals.size() && subgoal_holds(goals[i], s)) {
        s.satisfied_subgoals[i] = 1;
        ++i;
    }
    return !was_done && i == goals.size();
}

// Operating a faulty appliance leaves the state untouched and ends the episode.
bool hazardous(const EnvState& s, const Action& a, const TaskSpec& t) {
    return a.verb != Verb::goto_ && a.verb != Verb::take && a.verb != Verb::put && a.verb != Verb::examine &&
           std::find(t.faulty.begin(), t.faulty.end(), s.agent_location) != t.faulty.end();
}

void apply_valid(EnvState& s, const Action& a, const TaskSpec& t) {
    if (hazardous(s, a, t)) return;
    switch (a.verb) {
        case Verb::goto_: s.agent_location = a.arg0; break;
        case Verb::take:
            s.holding = a.arg0;
            s.object_locations[a.arg0] = kHeld;
            break;
        case Verb::put:
            s.holding = -1;
            s.object_locations[a.arg0] = a.arg1;
            break;
        case Verb::clean: s.object_attrs[a.arg0] |= attr::clean; break;
        case Verb::heat:
            s.object_attrs[a.arg0] |= attr::hot;
            s.object_attrs[a.arg0] &= static_cast<std::uint8_t>(~attr::cold);
            break;
        case Verb::cool:
            s.object_attrs[a.arg0] |= attr::cold;
            s.object_attrs[a.arg0] &= static_cast<std::uint8_t>(~attr::hot);
            break;
        case Verb::toggle: s.light_on = !s.light_on; break;
        case Verb::examine: s.object_attrs[a.arg0] |= attr::examined; break;
        case Verb::noop: break;
    }
}

std::string subgoal_string(const Subgoal& g, const TaskSpec& t) {
    auto obj = [&](int i) { return t.objects[static_cast<std::size_t>(i)]; };
    switch (g.kind) {
        case SubgoalKind::hold: return "hold " + obj(g.objects[0]);
        case SubgoalKind::clean: return "clean " + obj(g.objects[0]);
        case SubgoalKind::heat: return "heat " + obj(g.objects[0]);
        case SubgoalKind::cool: return "cool " + obj(g.objects[0]);
        case SubgoalKind::examine: return "examine " + obj(g.objects[0]);
        case SubgoalKind::light: return "light on";
        case SubgoalKind::place: {
            std::string out = "place ";
            if (g.objects.size() > 1) out += std::to_string(g.count) + " of ";
            for (std::size_t i = 0; i < g.objects.size(); ++i) {
                if (i) out += "/";
                out += obj(g.objects[i]);
            }
            return out + " in " + t.locations[static_cast<std::size_t>(g.location)];
        }
    }
    return {};
}

std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + sep.size();
    }
}

int index_of(const std::vector<std::string>& names, std::string_view name) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

template <class Seq>
std::string_view pick(Rng& rng, const Seq& seq) {
    return seq[rng.below(seq.size())];
}

template <class T>
void shuffle(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::string_view appliance_kind(Family f) {
    switch (f) {
        case Family::CLEAN: return "sink";
        case Family::HEAT: return "microwave";
        case Family::COOL: return "fridge";
        case Family::LOOK: return "desk";
        default: return {};
    }
}

// Second appliance of the same fixture type. The partner is always faulty.
std::string_view partner_kind(Family f) {
    switch (f) {
        case Family::CLEAN: return "basin";
        case Family::HEAT: return "stove";
        case Family::COOL: return "freezer";
        case Family::LOOK: return "floorlamp";
        default: return {};
    }
}

// Assigns rooms and names; kinds are unique per instance so every name gets suffix _1.
void build_layout(TaskSpec& t, std::vector<std::string> kinds, bool two_rooms, Rng& rng) {
    std::sort(kinds.begin(), kinds.end());
    if (two_rooms) kinds.emplace_back("hallway");
    std::sort(kinds.begin(), kinds.end());
    t.locations.clear();
    for (const auto& k : kinds) t.locations.push_back(k + "_1");
    t.rooms.assign(t.locations.size(), 0);
    if (two_rooms) {
        std::vector<int> plain;
        for (std::size_t i = 0; i < t.locations.size(); ++i) {
            if (fixture_of(t.locations[i]) == Fixture::hallway)
                t.rooms[i] = -1;
            else
                plain.push_back(static_cast<int>(i));
        }
        shuffle(rng, plain);
        for (std::size_t j = 0; j < plain.size(); ++j) t.rooms[plain[j]] = j < plain.size() / 2 ? 0 : 1;
    }
}

std::vector<int> plain_locations(const TaskSpec& t) {
    std::vector<int> out;
    for (std::size_t i = 0; i < t.locations.size(); ++i)
        if (fixture_of(t.locations[i]) != Fixture::hallway) out.push_back(static_cast<int>(i));
    return out;
}

void name_objects(TaskSpec& t, const std::vector<std::string>& types) {
    t.objects.clear();
    std::vector<std::pair<std::string, int>> seen;
    for (const auto& ty : types) {
        int n = 1;
        for (auto& [name, count] : seen)
            if (name == ty) n = ++count;
        if (n == 1) seen.emplace_back(ty, 1);
        t.objects.push_back(ty + "_" + std::to_string(n));
    }
}

TaskSpec generate_house(Family family, Rng& rng) {
    TaskSpec t;
    t.family = family;
    const std::string appliance{appliance_kind(family)};
    const int n_loc = 4 + static_cast<int>(rng.below(5));
    const bool two_rooms = n_loc >= 5;
    const int n_plain = n_loc - (two_rooms ? 1 : 0);

    std::vector<std::string> kinds;
    std::string dest_kind;
    if (family != Family::LOOK) {
        do {
            dest_kind = std::string(pick(rng, kHouseDestinations));
        } while (dest_kind == appliance);
        kinds.push_back(dest_kind);
    }
    const std::string partner{partner_kind(family)};
    if (!appliance.empty()) {
        kinds.push_back(appliance);
        kinds.push_back(partner);
    }
    std::vector<std::string> pool;
    for (auto k : kHouseReceptacles) pool.emplace_back(k);
    for (auto k : {"sink", "microwave", "fridge"}) pool.emplace_back(k);
    shuffle(rng, pool);
    for (const auto& k : pool) {
        if (static_cast<int>(kinds.size()) >= n_plain) break;
        if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
    }
    build_layout(t, kinds, two_rooms, rng);
    const int dest = dest_kind.empty() ? -1 : index_of(t.locations, dest_kind + "_1");
    if (!appliance.empty()) {
        const int a = index_of(t.locations, appliance + "_1");
        const int b = index_of(t.locations, partner + "_1");
        t.faulty = {b};
        // Both appliances share a room.
        if (t.rooms[b] != t.rooms[a]) {
            for (std::size_t i = 0; i < t.rooms.size(); ++i) {
                if (static_cast<int>(i) != a && t.rooms[i] == t.rooms[a]) {
                    std::swap(t.rooms[i], t.rooms[b]);
                    break;
                }
            }
        }
    }

    const int n_obj = 3 + static_cast<int>(rng.below(4));
    const std::string target_type{pick(rng, kHouseObjects)};
    const int n_targets = family == Family::PICK2 ? 2 : 1;
    std::vector<std::string> types(static_cast<std::size_t>(n_targets), target_type);
    while (static_cast<int>(types.size()) < n_obj) {
        std::string ty{pick(rng, kHouseObjects)};
        if (ty != target_type) types.push_back(ty);
    }
    // targets first, then distractors in generated order
    name_objects(t, types);

    const auto plain = plain_locations(t);
    // Targets usually start in the room opposite the destination.
    std::vector<int> source_candidates;
    const bool far_source = two_rooms && dest >= 0 && rng.below(4) != 0;
    for (int l : plain)
        if (l != dest && (!far_source || t.rooms[static_cast<std::size_t>(l)] != t.rooms[static_cast<std::size_t>(dest)]))
            source_candidates.push_back(l);
    t.initial_object_locations.clear();
    for (int i = 0; i < n_obj; ++i) {
        const auto& cands = i < n_targets ? source_candidates : plain;
        t.initial_object_locations.push_back(cands[rng.below(cands.size())]);
    }
    t.initial_agent_location = static_cast<int>(rng.below(t.locations.size()));

    auto& g = t.goal;
    for (int i = 0; i < n_targets; ++i) g.targets.push_back(i);
    g.destination = dest;
    switch (family) {
        case Family::PICK:
            g.subgoals = {{SubgoalKind::hold, {0}, -1, 1}, {SubgoalKind::place, {0}, dest, 1}};
            break;
        case Family::CLEAN:
            g.required_attr = attr::clean;
            g.subgoals = {{SubgoalKind::clean, {0}, -1, 1}, {SubgoalKind::place, {0}, dest, 1}};
            break;
        case Family::HEAT:
            g.required_attr = attr::hot;
            g.subgoals = {{SubgoalKind::heat, {0}, -1, 1}, {SubgoalKind::place, {0}, dest, 1}};
            break;
        case Family::COOL:
            g.required_attr = attr::cold;
            g.subgoals = {{SubgoalKind::cool, {0}, -1, 1}, {SubgoalKind::place, {0}, dest, 1}};
            break;
        case Family::LOOK:
            g.required_attr = attr::examined;
            g.subgoals = {{SubgoalKind::light, {}, -1, 1}, {SubgoalKind::examine, {0}, -1, 1}};
            break;
        case Family::PICK2:
            g.subgoals = {{SubgoalKind::place, {0, 1}, dest, 1}, {SubgoalKind::place, {0, 1}, dest, 2}};
            break;
        case Family::LAB_CHAIN: break;
    }
    return t;
}

TaskSpec generate_lab(Rng& rng, int chain_len) {
    TaskSpec t;
    t.family = Family::LAB_CHAIN;
    const int n_obj = 3 + static_cast<int>(rng.below(2));
    std::vector<std::string> types;
    for (int i = 0; i < n_obj; ++i) types.emplace_back(pick(rng, kLabObjects));
    std::sort(types.begin(), types.end());
    name_objects(t, types);

    struct Draft {
        SubgoalKind kind;
        int object;
    };
    std::vector<Draft> drafts;
    constexpr std::array<SubgoalKind, 4> ops{SubgoalKind::clean, SubgoalKind::heat, SubgoalKind::cool,
                                             SubgoalKind::place};
    while (static_cast<int>(drafts.size()) < chain_len) {
        const Draft d{ops[rng.below(ops.size())], static_cast<int>(rng.below(t.objects.size()))};
        if (!drafts.empty() && drafts.back().kind == d.kind && drafts.back().object == d.object) continue;
        drafts.push_back(d);
    }

    std::vector<std::string> kinds;
    auto need = [&](std::string_view k) {
        if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.emplace_back(k);
    };
    for (const auto& d : drafts) {
        if (d.kind == SubgoalKind::clean) need("sink");
        if (d.kind == SubgoalKind::heat) need("stove");
        if (d.kind == SubgoalKind::cool) need("freezer");
    }
    const int n_loc = std::max<int>(static_cast<int>(kinds.size()) + 2, 4 + static_cast<int>(rng.below(3)));
    std::vector<std::string> pool(kLabReceptacles.begin(), kLabReceptacles.end());
    shuffle(rng, pool);
    for (const auto& k : pool)
        if (static_cast<int>(kinds.size()) < n_loc) need(k);
    build_layout(t, kinds, false, rng);

    const auto plain = plain_locations(t);
    for (int i = 0; i < n_obj; ++i) t.initial_object_locations.push_back(plain[rng.below(plain.size())]);
    t.initial_agent_location = static_cast<int>(rng.below(t.locations.size()));

    auto& g = t.goal;
    for (const auto& d : drafts) {
        Subgoal sg{d.kind, {d.object}, -1, 1};
        if (d.kind == SubgoalKind::place) {
            std::vector<int> cands;
            for (int l : plain)
                if (l != t.initial_object_locations[static_cast<std::size_t>(d.object)] &&
                    fixture_of(t.locations[static_cast<std::size_t>(l)]) == Fixture::plain)
                    cands.push_back(l);
            sg.location = cands[rng.below(cands.size())];
        }
        g.subgoals.push_back(sg);
        if (std::find(g.targets.begin(), g.targets.end(), d.object) == g.targets.end())
            g.targets.push_back(d.object);
    }
    return t;
}

}  // namespace

std::string_view family_name(Family f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

Family parse_family(std::string_view name) {
    for (std::size_t i = 0; i < kFamilyNames.size(); ++i)
        if (kFamilyNames[i] == name) return static_cast<Family>(i);
    throw ConfigError("unknown task family: " + std::string(name));
}

std::string_view verb_name(Verb v) { return kVerbNames[static_cast<std::size_t>(v)]; }

Fixture fixture_of(std::string_view name) {
    const auto kind = name.substr(0, name.find('_'));
    if (kind == "hallway") return Fixture::hallway;
    if (kind == "sink" || kind == "basin") return Fixture::sink;
    if (kind == "microwave" || kind == "stove") return Fixture::heater;
    if (kind == "fridge" || kind == "freezer") return Fixture::cooler;
    if (kind == "desk" || kind == "floorlamp") return Fixture::lamp;
    return Fixture::plain;
}

bool adjacent(const TaskSpec& task, int from, int to) {
    const int a = task.rooms[static_cast<std::size_t>(from)];
    const int b = task.rooms[static_cast<std::size_t>(to)];
    return a == b || a < 0 || b < 0;
}

void finalize_task(TaskSpec& t) {
    t.fixtures.clear();
    for (const auto& name : t.locations) t.fixtures.push_back(fixture_of(name));
    const int nl = static_cast<int>(t.locations.size());
    const int no = static_cast<int>(t.objects.size());
    std::vector<Action> all;
    for (int l = 0; l < nl; ++l) all.push_back({Verb::goto_, l, -1});
    for (int o = 0; o < no; ++o) {
        all.push_back({Verb::take, o, -1});
        for (int l = 0; l < nl; ++l)
            if (fixture_of(t.locations[static_cast<std::size_t>(l)]) != Fixture::hallway)
                all.push_back({Verb::put, o, l});
        all.push_back({Verb::clean, o, -1});
        all.push_back({Verb::heat, o, -1});
        all.push_back({Verb::cool, o, -1});
        all.push_back({Verb::examine, o, -1});
    }
    for (int l = 0; l < nl; ++l)
        if (fixture_of(t.locations[static_cast<std::size_t>(l)]) == Fixture::lamp) all.push_back({Verb::toggle, l, -1});
    std::vector<std::pair<std::string, Action>> keyed;
    for (const auto& a : all) keyed.emplace_back(action_string(a, t), a);
    std::sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    t.action_catalog.clear();
    for (auto& [_, a] : keyed) t.action_catalog.push_back(a);
}

TaskSpec sample_task(Family family, std::uint64_t seed, const TaskOptions& options) {
    for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
        Rng rng(derive_seed(seed, family_name(family), attempt));
        TaskSpec t = family == Family::LAB_CHAIN ? generate_lab(rng, options.chain_len) : generate_house(family, rng);
        t.instance_seed = seed;
        t.max_steps = kGenerationDepthCap;
        finalize_task(t);
        auto [s0, obs] = reset(t);
        std::vector<Action> plan;
        try {
            plan = expert_plan(s0, t);
        } catch (const Unsolvable&) {
            continue;
        }
        const int len = static_cast<int>(plan.size());
        if (len == 0) continue;
        t.max_steps = len + std::max(3, (len + 1) / 2);
        return t;
    }
    throw Error("task generator failed to produce a solvable instance");
}

std::pair<EnvState, std::string> reset(const TaskSpec& task) {
    EnvState s;
    s.agent_location = task.initial_agent_location;
    s.object_locations = task.initial_object_locations;
    s.object_attrs.assign(task.objects.size(), 0);
    s.satisfied_subgoals.assign(task.goal.subgoals.size(), 0);
    auto obs = canonical_string(s, task);
    return {std::move(s), std::move(obs)};
}

bool is_valid(const EnvState& s, const Action& a, const TaskSpec& t) {
    const int nl = static_cast<int>(t.locations.size());
    const int no = static_cast<int>(t.objects.size());
    auto loc_ok = [&](int l) { return l >= 0 && l < nl; };
    auto obj_ok = [&](int o) { return o >= 0 && o < no; };
    const Fixture here = t.fixtures[static_cast<std::size_t>(s.agent_location)];
    switch (a.verb) {
        case Verb::goto_:
            return loc_ok(a.arg0) && a.arg0 != s.agent_location && adjacent(t, s.agent_location, a.arg0);
        case Verb::take:
            return obj_ok(a.arg0) && s.holding < 0 && s.object_locations[static_cast<std::size_t>(a.arg0)] == s.agent_location;
        case Verb::put:
            return obj_ok(a.arg0) && loc_ok(a.arg1) && s.holding == a.arg0 && a.arg1 == s.agent_location &&
                   here != Fixture::hallway;
        case Verb::clean: return obj_ok(a.arg0) && s.holding == a.arg0 && here == Fixture::sink;
        case Verb::heat: return obj_ok(a.arg0) && s.holding == a.arg0 && here == Fixture::heater;
        case Verb::cool: return obj_ok(a.arg0) && s.holding == a.arg0 && here == Fixture::cooler;
        case Verb::toggle: return loc_ok(a.arg0) && a.arg0 == s.agent_location && here == Fixture::lamp;
        case Verb::examine: return obj_ok(a.arg0) && s.holding == a.arg0 && s.light_on;
        case Verb::noop: return false;
    }
    return false;
}

StepOutcome env_step(const EnvState& state, const Action& action, const TaskSpec& task) {
    if (state.step_count >= task.max_steps)
        throw StepLimitExceeded("step " + std::to_string(state.step_count) + " >= max_steps " +
                                std::to_string(task.max_steps));
    StepOutcome out;
    out.next_state = state;
    out.next_state.step_count = state.step_count + 1;
    const bool timeout = out.next_state.step_count == task.max_steps;
    if (!is_valid(state, action, task)) {
        out.observation = std::string(kNothingHappened);
        out.done = timeout;
        return out;
    }
    out.valid = true;
    if (hazardous(state, action, task)) {
        out.done = true;
        out.observation = canonical_string(out.next_state, task);
        return out;
    }
    apply_valid(out.next_state, action, task);
    const bool success = latch_subgoals(out.next_state, task);
    out.reward = success ? 1.0 : 0.0;
    out.done = success || timeout;
    out.observation = canonical_string(out.next_state, task);
    return out;
}

std::vector<Action> admissible_actions(const EnvState& state, const TaskSpec& task) {
    std::vector<Action> out;
    for (const auto& a : task.action_catalog)
        if (is_valid(state, a, task)) out.push_back(a);
    return out;
}

std::vector<Action> expert_plan(const EnvState& state, const TaskSpec& task) {
    if (goal_reached(state)) return {};
    const int budget = task.max_steps - state.step_count;
    struct Node {
        EnvState state;
        int parent;
        Action action;
        int depth;
    };
    std::vector<Node> nodes;
    std::unordered_set<std::string> seen;
    nodes.push_back({state, -1, {}, 0});
    seen.insert(state_key(state));
    for (std::size_t head = 0; head < nodes.size(); ++head) {
        if (nodes[head].depth >= budget) break;
        for (const auto& a : task.action_catalog) {
            if (!is_valid(nodes[head].state, a, task) || hazardous(nodes[head].state, a, task)) continue;
            EnvState next = nodes[head].state;
            apply_valid(next, a, task);
            const bool success = latch_subgoals(next, task);
            next.step_count += 1;
            if (success) {
                std::vector<Action> plan{a};
                for (int i = static_cast<int>(head); nodes[static_cast<std::size_t>(i)].parent >= 0;
                     i = nodes[static_cast<std::size_t>(i)].parent)
                    plan.push_back(nodes[static_cast<std::size_t>(i)].action);
                std::reverse(plan.begin(), plan.end());
                return plan;
            }
            if (seen.insert(state_key(next)).second)
                nodes.push_back({std::move(next), static_cast<int>(head), a, nodes[head].depth + 1});
        }
    }
    throw Unsolvable("no goal state reachable within " + std::to_string(budget) + " steps");
}

int satisfied_count(const EnvState& s) {
    int n = 0;
    for (auto b : s.satisfied_subgoals) n += b ? 1 : 0;
    return n;
}

bool goal_reached(const EnvState& s) {
    return !s.satisfied_subgoals.empty() &&
           satisfied_count(s) == static_cast<int>(s.satisfied_subgoals.size());
}

double subgoal_progress(const EnvState& state, const TaskSpec& task) {
    if (task.goal.subgoals.empty()) return 1.0;
    return static_cast<double>(satisfied_count(state)) / static_cast<double>(task.goal.subgoals.size());
}

std::string goal_string(const TaskSpec& task) {
    std::string out{family_name(task.family)};
    out += ":";
    for (std::size_t i = 0; i < task.goal.subgoals.size(); ++i) {
        out += i ? ", " : " ";
        out += subgoal_string(task.goal.subgoals[i], task);
    }
    return out;
}

std::string canonical_string(const EnvState& s, const TaskSpec& t) {
    std::string out = goal_string(t);
    out += " || at=";
    out += t.locations[static_cast<std::size_t>(s.agent_location)];
    out += " hold=";
    out += s.holding >= 0 ? t.objects[static_cast<std::size_t>(s.holding)] : std::string("none");
    out += s.light_on ? " light=on || " : " light=off || ";
    for (std::size_t o = 0; o < t.objects.size(); ++o) {
        if (o) out += ' ';
        out += t.objects[o];
        out += '@';
        out += s.object_locations[o] == kHeld ? std::string("hand")
                                              : t.locations[static_cast<std::size_t>(s.object_locations[o])];
        const auto a = s.object_attrs[o];
        if (a & attr::clean) out += "+clean";
        if (a & attr::cold) out += "+cold";
        if (a & attr::examined) out += "+examined";
        if (a & attr::hot) out += "+hot";
    }
    out += " || sg=";
    for (auto b : s.satisfied_subgoals) out += b ? '1' : '0';
    return out;
}

EnvState parse_state(std::string_view text, const TaskSpec& t, int step_count) {
    auto fail = [&](const char* why) -> UnparseableState {
        return UnparseableState(std::string(why) + ": " + std::string(text.substr(0, 120)));
    };
    const auto parts = split(text, " || ");
    if (parts.size() != 4) throw fail("expected 4 sections");
    if (parts[0] != goal_string(t)) throw fail("goal mismatch");

    EnvState s;
    s.step_count = step_count;
    const auto head = split(parts[1], " ");
    if (head.size() != 3 || head[0].substr(0, 3) != "at=" || head[1].substr(0, 5) != "hold=" ||
        head[2].substr(0, 6) != "light=")
        throw fail("bad header");
    s.agent_location = index_of(t.locations, head[0].substr(3));
    if (s.agent_location < 0) throw fail("unknown location");
    const auto hold = head[1].substr(5);
    s.holding = hold == "none" ? -1 : index_of(t.objects, hold);
    if (hold != "none" && s.holding < 0) throw fail("unknown held object");
    if (head[2] == "light=on")
        s.light_on = true;
    else if (head[2] != "light=off")
        throw fail("bad light");

    const auto objs = split(parts[2], " ");
    if (objs.size() != t.objects.size()) throw fail("object count");
    s.object_locations.resize(t.objects.size());
    s.object_attrs.assign(t.objects.size(), 0);
    int held_seen = 0;
    for (std::size_t o = 0; o < objs.size(); ++o) {
        const auto at = objs[o].find('@');
        if (at == std::string_view::npos || objs[o].substr(0, at) != t.objects[o]) throw fail("object order");
        auto rest = split(objs[o].substr(at + 1), "+");
        if (rest[0] == "hand") {
            s.object_locations[o] = kHeld;
            ++held_seen;
            if (s.holding != static_cast<int>(o)) throw fail("held object mismatch");
        } else {
            s.object_locations[o] = index_of(t.locations, rest[0]);
            if (s.object_locations[o] < 0) throw fail("unknown object location");
        }
        for (std::size_t k = 1; k < rest.size(); ++k) {
            if (rest[k] == "clean") s.object_attrs[o] |= attr::clean;
            else if (rest[k] == "cold") s.object_attrs[o] |= attr::cold;
            else if (rest[k] == "examined") s.object_attrs[o] |= attr::examined;
            else if (rest[k] == "hot") s.object_attrs[o] |= attr::hot;
            else throw fail("unknown attribute");
        }
    }
    if (held_seen != (s.holding >= 0 ? 1 : 0)) throw fail("holding inconsistent");

    const auto sg = parts[3];
    if (sg.substr(0, 3) != "sg=" || sg.size() - 3 != t.goal.subgoals.size()) throw fail("subgoal bits");
    for (char c : sg.substr(3)) {
        if (c != '0' && c != '1') throw fail("subgoal bits");
        s.satisfied_subgoals.push_back(c == '1' ? 1 : 0);
    }
    return s;
}

std::string action_string(const Action& a, const TaskSpec& t) {
    std::string out{verb_name(a.verb)};
    auto loc = [&](int i) { return t.locations.at(static_cast<std::size_t>(i)); };
    auto obj = [&](int i) { return t.objects.at(static_cast<std::size_t>(i)); };
    switch (a.verb) {
        case Verb::goto_:
        case Verb::toggle: return out + " " + loc(a.arg0);
        case Verb::put: return out + " " + obj(a.arg0) + " " + loc(a.arg1);
        case Verb::noop: return out;
        default: return out + " " + obj(a.arg0);
    }
}

Action parse_action(std::string_view text, const TaskSpec& t) {
    const auto tok = split(text, " ");
    Action a;
    std::size_t v = 0;
    while (v < kVerbNames.size() && kVerbNames[v] != tok[0]) ++v;
    if (v == kVerbNames.size()) throw Error("unknown verb in action: " + std::string(text));
    a.verb = static_cast<Verb>(v);
    auto need = [&](std::size_t n) {
        if (tok.size() != n + 1) throw Error("wrong arity in action: " + std::string(text));
    };
    auto find = [&](const std::vector<std::string>& names, std::string_view s) {
        const int i = index_of(names, s);
        if (i < 0) throw Error("unknown entity in action: " + std::string(text));
        return i;
    };
    switch (a.verb) {
        case Verb::goto_:
        case Verb::toggle:
            need(1);
            a.arg0 = find(t.locations, tok[1]);
            break;
        case Verb::put:
            need(2);
            a.arg0 = find(t.objects, tok[1]);
            a.arg1 = find(t.locations, tok[2]);
            break;
        case Verb::noop: need(0); break;
        default:
            need(1);
            a.arg0 = find(t.objects, tok[1]);
    }
    return a;
}

std::string state_key(const EnvState& s) {
    std::string k;
    k.reserve(4 + 2 * s.object_locations.size() + s.satisfied_subgoals.size());
    k.push_back(static_cast<char>(s.agent_location));
    k.push_back(static_cast<char>(s.holding + 1));
    k.push_back(static_cast<char>(s.light_on));
    for (int l : s.object_locations) k.push_back(static_cast<char>(l + 1));
    for (auto a : s.object_attrs) k.push_back(static_cast<char>(a));
    for (auto b : s.satisfied_subgoals) k.push_back(static_cast<char>(b));
    return k;
}

}  // namespace itp
