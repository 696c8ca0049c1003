#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "itp/agent.hpp"
#include "itp/env.hpp"
#include "itp/rng.hpp"

namespace itp {

enum class ControllerKind : std::uint8_t { Reactive, Fixed, RandomUniform, HeuristicAdaptive, LearnedAdaptive };
enum class KSelectMode : std::uint8_t { sample, argmax };

// Chooses the lookahead horizon K_t for each real step.
struct LookaheadController {
    ControllerKind kind = ControllerKind::Reactive;
    int fixed_k = 0;
    KSelectMode mode = KSelectMode::argmax;

    static LookaheadController reactive() { return {}; }
    static LookaheadController fixed(int k) { return {ControllerKind::Fixed, k, KSelectMode::argmax}; }
    static LookaheadController random() { return {ControllerKind::RandomUniform, 0, KSelectMode::argmax}; }
    static LookaheadController heuristic() { return {ControllerKind::HeuristicAdaptive, 0, KSelectMode::argmax}; }
    static LookaheadController learned(KSelectMode m = KSelectMode::argmax) {
        return {ControllerKind::LearnedAdaptive, 0, m};
    }
};

// Throws ConfigError for Fixed(k) outside [0, K_max].
int select_k(const LookaheadController& controller, const AgentParams& params, const EnvState& state,
             const TaskSpec& task, Rng& rng);

// reactive | fixed:K | random | heuristic | learned | learned:sample
LookaheadController parse_controller(std::string_view text);
std::string controller_name(const LookaheadController& c);

}  // namespace itp
