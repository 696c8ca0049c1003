#pragma once

// Linear-softmax agent: action policy conditioned on an optional reflection
// summary, a K-head over lookahead horizons and a value head, all over
// engineered features.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itp/env.hpp"

namespace itp {

inline constexpr int kEncoderVersion = 1;

// State feature layout.
namespace sf {
inline constexpr int bias = 0;
inline constexpr int family = 1;  // kNumFamilies one-hot
inline constexpr int holding_any = family + kNumFamilies;
inline constexpr int holding_target = holding_any + 1;
inline constexpr int goal_attr = holding_target + 1;  // clean, cold, examined, hot
inline constexpr int progress = goal_attr + 4;
inline constexpr int step_frac = progress + 1;
inline constexpr int light_on = step_frac + 1;
inline constexpr int at_hallway = light_on + 1;
inline constexpr int at_appliance = at_hallway + 1;
inline constexpr int location_hash = at_appliance + 1;
inline constexpr int location_buckets = 64;
inline constexpr int size = location_hash + location_buckets;
}  // namespace sf

// Action-context feature layout: [state | verb one-hot | relevance | lookahead].
namespace af {
inline constexpr int verb = sf::size;
inline constexpr int relevance = verb + kNumVerbs;
inline constexpr int obj_is_focus = relevance + 0;
inline constexpr int obj_is_distractor = relevance + 1;
inline constexpr int goto_focus_object = relevance + 2;
inline constexpr int goto_destination = relevance + 3;
inline constexpr int goto_appliance = relevance + 4;
inline constexpr int goto_hallway = relevance + 5;
inline constexpr int put_at_destination = relevance + 6;
inline constexpr int op_matches_goal = relevance + 7;
inline constexpr int redundant_op = relevance + 8;
inline constexpr int put_elsewhere = relevance + 9;
inline constexpr int take_back_placed = relevance + 10;
inline constexpr int leave_appliance = relevance + 11;  // goto away from a needed appliance
inline constexpr int lookahead = relevance + 12;
// Lookahead block. The last three are signed: +x for the action that agrees
// with the first imagined action, -x for every other action.
inline constexpr int agrees = lookahead + 0;
inline constexpr int reaches_goal = lookahead + 1;
inline constexpr int conflict = lookahead + 2;
inline constexpr int progress_delta = lookahead + 3;
inline constexpr int lookahead_size = 4;
inline constexpr int size = lookahead + lookahead_size;
}  // namespace af

struct FeatureVector {
    std::vector<double> values;
    int encoder_version = kEncoderVersion;
    bool operator==(const FeatureVector&) const = default;
};

struct ReflectionSummary {
    bool reaches_goal = false;
    std::optional<int> steps_to_goal;
    bool conflict_flag = false;
    double progress_delta = 0.0;
    std::optional<Action> first_imagined_action;
    bool operator==(const ReflectionSummary&) const = default;
};

struct AgentParams {
    std::vector<double> action_weights;  // af::size
    std::vector<double> k_weights;       // (K_max + 1) x sf::size, row-major
    std::vector<double> value_weights;   // sf::size
    int K_max = 5;
    double temperature = 0.7;
    int encoder_version = kEncoderVersion;

    static AgentParams zeros(int K_max, double temperature = 0.7);
    std::span<double> k_row(int k) {
        return {k_weights.data() + static_cast<std::size_t>(k) * sf::size, static_cast<std::size_t>(sf::size)};
    }
    std::span<const double> k_row(int k) const {
        return {k_weights.data() + static_cast<std::size_t>(k) * sf::size, static_cast<std::size_t>(sf::size)};
    }
    bool operator==(const AgentParams&) const = default;
};

// Initial weights on the lookahead block: how a freshly cloned policy reads
// foresight before any lookahead-conditioned training.
struct ForesightPrior {
    double agrees = 0.5;
    double reaches_goal = 2.0;
    double conflict = -3.0;
    double progress_delta = 3.0;
};
void apply_foresight_prior(AgentParams& params, const ForesightPrior& prior);

FeatureVector encode_state(const EnvState& state, const TaskSpec& task);
FeatureVector encode_action_context(const EnvState& state, const TaskSpec& task, const Action& action,
                                    const std::optional<ReflectionSummary>& summary);

double dot(std::span<const double> a, std::span<const double> b);
// Numerically stable softmax in place; returns log-sum-exp of the inputs.
double softmax_inplace(std::vector<double>& logits);

// Policy over the admissible set, with the per-action features kept for
// gradient computation.
struct PolicyEval {
    std::vector<Action> actions;
    std::vector<FeatureVector> features;
    std::vector<double> logits;  // already divided by temperature
    std::vector<double> probs;
    std::size_t index_of(const Action& a) const;
};

PolicyEval policy_distribution(const AgentParams& params, const EnvState& state, const TaskSpec& task,
                               const std::optional<ReflectionSummary>& summary);
std::vector<double> k_distribution(const AgentParams& params, const EnvState& state, const TaskSpec& task);
std::vector<double> k_distribution(const AgentParams& params, std::span<const double> state_features);
double value(const AgentParams& params, const EnvState& state, const TaskSpec& task);
double log_prob_action(const AgentParams& params, const EnvState& state, const TaskSpec& task,
                       const std::optional<ReflectionSummary>& summary, const Action& action);

// d log pi(a) / d action_weights, accumulated into grad with the given scale.
void accumulate_log_prob_grad(const PolicyEval& eval, std::size_t action_index, double temperature, double scale,
                              std::span<double> grad);
// d log P(k) / d k_weights, accumulated into grad with the given scale.
void accumulate_k_log_prob_grad(std::span<const double> state_features, std::span<const double> k_probs, int k,
                                double scale, std::span<double> grad);
double entropy(std::span<const double> probs);
// d H(P_K) / d k_weights, accumulated into grad with the given scale.
void accumulate_k_entropy_grad(std::span<const double> state_features, std::span<const double> k_probs,
                               double scale, std::span<double> grad);

std::string params_to_json(const AgentParams& params, const std::string& config_hash = {});
// Throws ConfigError on an encoder_version mismatch.
AgentParams params_from_json(const std::string& text, std::string* config_hash = nullptr);

}  // namespace itp
