#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itp/agent.hpp"
#include "itp/env.hpp"
#include "itp/imagination.hpp"
#include "itp/world_model.hpp"

namespace itp {

enum class Optimizer { sgd, adam };

struct TrainConfig {
    double lambda_k = 0.2;
    double lambda_step = 0.01;
    double success_bonus = 0.01;
    double invalid_penalty = -0.1;
    double gamma = 0.99;
    double eta = 0.5;
    double alpha = 1.0;
    double beta = 0.01;
    double max_grad_norm = 1.0;
    double learning_rate_bc = 0.5;
    double learning_rate_warmup = 0.5;
    double learning_rate_rl = 0.003;
    int epochs_bc = 1000;
    int epochs = 400;  // warm-up
    // Leading RL episodes that update only the value head, so the first
    // policy-gradient steps see a fitted baseline.
    int critic_warmup_episodes = 200;
    // Bootstrap horizon of the TD target; 1 gives r + gamma * V(s').
    int td_steps = 10;
    // Apply an update after every environment step instead of once per episode.
    bool per_step_updates = false;
    Optimizer rl_optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int K_max = 5;
    double temperature = 0.7;
    ForesightPrior prior{};
};

struct ExpertEpisode {
    TaskSpec task;
    std::vector<Action> plan;
};

// Expert demonstrations from each task's initial state.
std::vector<ExpertEpisode> make_expert_episodes(std::span<const TaskSpec> tasks);

struct PseudoLabeledStep {
    std::string state;
    std::string expert_action;
    std::vector<int> k_candidates;
    std::vector<double> scores;
    std::vector<double> penalized_scores;
    int k_label = 0;
    std::vector<std::string> lookahead_summaries;

    // In-memory context carried from labeling into warm-up.
    std::size_t episode = 0;
    int step = 0;
    std::optional<ReflectionSummary> label_summary;  // empty when k_label == 0

    bool operator==(const PseudoLabeledStep&) const = default;
};

// argmax_k [scores[k] - lambda_k * candidates[k]], ties toward the smaller k.
int select_k_label(std::span<const int> candidates, std::span<const double> scores, double lambda_k);

// Minimizes expert-action NLL without lookahead conditioning, starting from
// zero weights plus the foresight prior. Full-batch gradient descent.
AgentParams behavior_clone(std::span<const ExpertEpisode> episodes, const TrainConfig& cfg,
                           std::vector<double>* loss_curve = nullptr);
// Samples n_tasks household tasks (families round-robin) and clones them.
AgentParams behavior_clone(int n_tasks, std::uint64_t seed, const TrainConfig& cfg);
double behavior_clone_loss(const AgentParams& params, std::span<const ExpertEpisode> episodes);

// Labels every expert step with the horizon that best explains the expert
// action under pi0. One teacher-forced rollout per step is sliced into all
// shorter horizons.
std::vector<PseudoLabeledStep> pseudo_label_dataset(std::span<const ExpertEpisode> episodes, const NoisyWorldModel& wm,
                                                    const AgentParams& pi0, const TrainConfig& cfg,
                                                    std::uint64_t seed);

struct WarmupLoss {
    double policy = 0.0;  // L_pi
    double k_head = 0.0;  // L_K
    double total = 0.0;   // L_pi + eta * L_K
};

WarmupLoss warmup_loss(const AgentParams& params, std::span<const PseudoLabeledStep> labeled,
                       std::span<const ExpertEpisode> episodes, const TrainConfig& cfg);
// Gradient of the total warm-up loss, flattened as in flatten_params.
std::vector<double> warmup_gradient(const AgentParams& params, std::span<const PseudoLabeledStep> labeled,
                                    std::span<const ExpertEpisode> episodes, const TrainConfig& cfg);
AgentParams warmup_train(const AgentParams& pi0, std::span<const PseudoLabeledStep> labeled,
                         std::span<const ExpertEpisode> episodes, const TrainConfig& cfg,
                         std::vector<WarmupLoss>* loss_curve = nullptr);

double shaped_reward(double env_reward, int k, bool valid, bool done_success, const TrainConfig& cfg);

// Bootstrap targets computed once from a parameter snapshot and held fixed
// while the loss is differentiated.
struct A2CTargets {
    std::vector<double> td_target;  // n-step return bootstrapped with V_old unless the episode ended
    std::vector<double> advantage;  // td_target - V_old(s)
};
A2CTargets a2c_targets(const AgentParams& snapshot, std::span<const StepRecord> batch, const TaskSpec& task,
                       const TrainConfig& cfg);

struct A2CLoss {
    double act = 0.0;
    double value = 0.0;
    double ent = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;          // before clipping
    double clipped_grad_norm = 0.0;  // after clipping
};

A2CLoss a2c_loss(const AgentParams& params, std::span<const StepRecord> batch, const TaskSpec& task,
                 const A2CTargets& targets, const TrainConfig& cfg, std::vector<double>* grad = nullptr);
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long steps = 0;
};

// critic_only restricts the step to the value head. With cfg.rl_optimizer ==
// adam the moments live in `adam`; a null state falls back to plain SGD.
std::pair<AgentParams, A2CLoss> a2c_update(const AgentParams& params, std::span<const StepRecord> batch,
                                           const TaskSpec& task, const TrainConfig& cfg, bool critic_only = false,
                                           AdamState* adam = nullptr);

struct CurveRow {
    int episode = 0;
    double shaped_return = 0.0;
    double env_return = 0.0;
    double mean_k = 0.0;
    double entropy_k = 0.0;
    A2CLoss loss;
};

struct OnlineResult {
    AgentParams params;
    std::vector<CurveRow> curve;
};

// Episode i runs on tasks[i % tasks.size()] with K sampled from the K-head;
// one A2C update per completed episode. The world model is only read.
OnlineResult online_train(const AgentParams& params, std::span<const TaskSpec> tasks, const NoisyWorldModel& wm,
                          const TrainConfig& cfg, int episodes, std::uint64_t seed);

std::vector<double> flatten_params(const AgentParams& p);
void unflatten_params(std::span<const double> flat, AgentParams& p);
double global_norm(std::span<const double> v);
// Scales v in place so its norm is at most max_norm; returns the norm before scaling.
double clip_global_norm(std::span<double> v, double max_norm);

}  // namespace itp
