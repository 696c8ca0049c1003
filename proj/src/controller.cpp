#include "itp/controller.hpp"

#include <algorithm>
#include <cmath>

#include "itp/errors.hpp"

namespace itp {

int select_k(const LookaheadController& c, const AgentParams& params, const EnvState& state, const TaskSpec& task,
             Rng& rng) {
    switch (c.kind) {
        case ControllerKind::Reactive: return 0;
        case ControllerKind::Fixed:
            if (c.fixed_k < 0 || c.fixed_k > params.K_max)
                throw ConfigError("fixed k " + std::to_string(c.fixed_k) + " outside [0, K_max]");
            return c.fixed_k;
        case ControllerKind::RandomUniform: return static_cast<int>(rng.below(static_cast<std::size_t>(params.K_max + 1)));
        case ControllerKind::HeuristicAdaptive: {
            const double remaining = 1.0 - subgoal_progress(state, task);
            const long k = std::lround(remaining * params.K_max);
            return static_cast<int>(std::clamp<long>(k, 0, params.K_max));
        }
        case ControllerKind::LearnedAdaptive: {
            const auto p = k_distribution(params, state, task);
            if (c.mode == KSelectMode::sample) return static_cast<int>(rng.categorical(p));
            return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        }
    }
    return 0;
}

LookaheadController parse_controller(std::string_view text) {
    if (text == "reactive") return LookaheadController::reactive();
    if (text == "random") return LookaheadController::random();
    if (text == "heuristic") return LookaheadController::heuristic();
    if (text == "learned") return LookaheadController::learned();
    if (text == "learned:sample") return LookaheadController::learned(KSelectMode::sample);
    if (text.starts_with("fixed:")) {
        const std::string num(text.substr(6));
        std::size_t used = 0;
        int k = -1;
        try {
            k = std::stoi(num, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != num.size() || num.empty() || k < 0) throw ConfigError("bad controller: " + std::string(text));
        return LookaheadController::fixed(k);
    }
    throw ConfigError("unknown controller: " + std::string(text));
}

std::string controller_name(const LookaheadController& c) {
    switch (c.kind) {
        case ControllerKind::Reactive: return "reactive";
        case ControllerKind::Fixed: return "fixed:" + std::to_string(c.fixed_k);
        case ControllerKind::RandomUniform: return "random";
        case ControllerKind::HeuristicAdaptive: return "heuristic";
        case ControllerKind::LearnedAdaptive: return c.mode == KSelectMode::sample ? "learned:sample" : "learned";
    }
    return "unknown";
}

}  // namespace itp
