#pragma once

// Deterministic text-style household and lab task environments.
//
// States are value objects and env_step is a pure function, so any number of
// episodes can be simulated concurrently against the same TaskSpec.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace itp {

enum class Family : std::uint8_t { PICK, CLEAN, HEAT, COOL, LOOK, PICK2, LAB_CHAIN };

inline constexpr std::array<Family, 6> kHouseFamilies{Family::PICK, Family::CLEAN, Family::HEAT,
                                                      Family::COOL, Family::LOOK,  Family::PICK2};
inline constexpr int kNumFamilies = 7;

std::string_view family_name(Family f);
Family parse_family(std::string_view name);

// Object attribute bits.
namespace attr {
inline constexpr std::uint8_t clean = 1;
inline constexpr std::uint8_t cold = 2;
inline constexpr std::uint8_t examined = 4;
inline constexpr std::uint8_t hot = 8;
}  // namespace attr

// Functional role of a location, derived from its name prefix ("sink_1" -> sink).
enum class Fixture : std::uint8_t { plain, hallway, sink, heater, cooler, lamp };
Fixture fixture_of(std::string_view location_name);

enum class Verb : std::uint8_t { goto_, take, put, clean, heat, cool, toggle, examine, noop };
inline constexpr int kNumVerbs = 9;
std::string_view verb_name(Verb v);

enum class SubgoalKind : std::uint8_t { hold, clean, heat, cool, light, examine, place };

struct Subgoal {
    SubgoalKind kind = SubgoalKind::hold;
    std::vector<int> objects;  // any of these satisfy the predicate
    int location = -1;         // place only
    int count = 1;             // place only: how many of `objects` must sit at `location`
    bool operator==(const Subgoal&) const = default;
};

struct GoalDescriptor {
    std::vector<int> targets;
    int destination = -1;
    std::uint8_t required_attr = 0;
    std::vector<Subgoal> subgoals;  // latched in order
    bool operator==(const GoalDescriptor&) const = default;
};

struct Action {
    Verb verb = Verb::noop;
    int arg0 = -1;
    int arg1 = -1;
    bool operator==(const Action&) const = default;
};

struct TaskSpec {
    Family family = Family::PICK;
    GoalDescriptor goal;
    std::uint64_t instance_seed = 0;
    int max_steps = 0;

    std::vector<std::string> locations;
    std::vector<int> rooms;  // room index per location; -1 marks a hallway adjacent to every room
    std::vector<std::string> objects;
    std::vector<int> initial_object_locations;
    int initial_agent_location = 0;
    // Appliance locations whose operation is accepted, changes nothing and
    // ends the episode without reward.
    std::vector<int> faulty;

    // Derived by finalize_task: fixture per location, and every syntactically
    // possible action sorted by canonical string.
    std::vector<Fixture> fixtures;
    std::vector<Action> action_catalog;

    bool operator==(const TaskSpec&) const = default;
};

inline constexpr int kHeld = -1;

struct EnvState {
    int agent_location = 0;
    std::vector<int> object_locations;  // kHeld while in hand
    std::vector<std::uint8_t> object_attrs;
    int holding = -1;
    bool light_on = false;
    std::vector<std::uint8_t> satisfied_subgoals;
    int step_count = 0;
    bool operator==(const EnvState&) const = default;
};

struct StepOutcome {
    EnvState next_state;
    std::string observation;
    double reward = 0.0;
    bool done = false;
    bool valid = false;
};

inline constexpr std::string_view kNothingHappened = "Nothing happened";

struct TaskOptions {
    int chain_len = 5;  // LAB_CHAIN sub-goal count
};

// Fills derived fields (action catalog). Call after building a TaskSpec by hand.
void finalize_task(TaskSpec& task);

TaskSpec sample_task(Family family, std::uint64_t seed, const TaskOptions& options = {});
std::pair<EnvState, std::string> reset(const TaskSpec& task);
StepOutcome env_step(const EnvState& state, const Action& action, const TaskSpec& task);
bool is_valid(const EnvState& state, const Action& action, const TaskSpec& task);
std::vector<Action> admissible_actions(const EnvState& state, const TaskSpec& task);
std::vector<Action> expert_plan(const EnvState& state, const TaskSpec& task);

double subgoal_progress(const EnvState& state, const TaskSpec& task);
int satisfied_count(const EnvState& state);
bool goal_reached(const EnvState& state);

// Observation text. Excludes step_count: two states that differ only in the
// step counter render identically.
std::string canonical_string(const EnvState& state, const TaskSpec& task);
// Inverse of canonical_string; throws UnparseableState if the text does not
// describe a state of `task`.
EnvState parse_state(std::string_view text, const TaskSpec& task, int step_count = 0);

std::string goal_string(const TaskSpec& task);
std::string action_string(const Action& action, const TaskSpec& task);
Action parse_action(std::string_view text, const TaskSpec& task);

// Compact binary identity of a state, ignoring the step counter.
std::string state_key(const EnvState& state);

bool adjacent(const TaskSpec& task, int from, int to);

}  // namespace itp
