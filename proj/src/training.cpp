#include "itp/training.hpp"

#include <algorithm>
#include <cmath>

#include "itp/errors.hpp"
#include "itp/rng.hpp"

namespace itp {

namespace {

// Features of every admissible action for a fixed (state, summary) context.
// Features do not depend on the weights, so they are computed once per dataset.
struct CachedContext {
    std::vector<std::vector<double>> action_features;
    std::size_t chosen = 0;
    std::vector<double> state_features;
    int k_label = 0;
};

CachedContext cache_context(const EnvState& s, const TaskSpec& task, const Action& chosen,
                            const std::optional<ReflectionSummary>& summary, int k_label) {
    CachedContext c;
    const auto actions = admissible_actions(s, task);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        c.action_features.push_back(encode_action_context(s, task, actions[i], summary).values);
        if (actions[i] == chosen) c.chosen = i;
    }
    c.state_features = encode_state(s, task).values;
    c.k_label = k_label;
    return c;
}

// Adds scale * d(log pi(chosen))/dw to grad and returns log pi(chosen).
double policy_term(const CachedContext& c, const AgentParams& p, double scale, std::span<double> grad) {
    std::vector<double> z;
    z.reserve(c.action_features.size());
    for (const auto& f : c.action_features) z.push_back(dot(p.action_weights, f) / p.temperature);
    std::vector<double> probs = z;
    const double lse = softmax_inplace(probs);
    if (!grad.empty()) {
        const double k = scale / p.temperature;
        const auto& fc = c.action_features[c.chosen];
        for (std::size_t j = 0; j < fc.size(); ++j) grad[j] += k * fc[j];
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const double w = k * probs[i];
            const auto& f = c.action_features[i];
            for (std::size_t j = 0; j < f.size(); ++j) grad[j] -= w * f[j];
        }
    }
    return z[c.chosen] - lse;
}

std::vector<std::vector<EnvState>> replay_states(std::span<const ExpertEpisode> episodes) {
    std::vector<std::vector<EnvState>> out;
    for (const auto& ep : episodes) {
        auto [s, obs] = reset(ep.task);
        std::vector<EnvState> states{s};
        for (const auto& a : ep.plan) {
            s = env_step(s, a, ep.task).next_state;
            states.push_back(s);
        }
        out.push_back(std::move(states));
    }
    return out;
}

std::vector<CachedContext> warmup_contexts(std::span<const PseudoLabeledStep> labeled,
                                           std::span<const ExpertEpisode> episodes) {
    const auto states = replay_states(episodes);
    std::vector<CachedContext> out;
    out.reserve(labeled.size());
    for (const auto& l : labeled) {
        const auto& ep = episodes[l.episode];
        const auto& s = states[l.episode][static_cast<std::size_t>(l.step)];
        out.push_back(cache_context(s, ep.task, ep.plan[static_cast<std::size_t>(l.step)], l.label_summary, l.k_label));
    }
    return out;
}

std::size_t k_offset() { return af::size; }
std::size_t value_offset(const AgentParams& p) { return af::size + p.k_weights.size(); }

WarmupLoss warmup_eval(const AgentParams& p, std::span<const CachedContext> ctx, const TrainConfig& cfg,
                       std::vector<double>* grad) {
    if (ctx.empty()) throw EmptyDataset("warm-up requires labeled steps");
    const double inv_n = 1.0 / static_cast<double>(ctx.size());
    std::span<double> ga, gk;
    if (grad) {
        grad->assign(af::size + p.k_weights.size() + p.value_weights.size(), 0.0);
        ga = std::span<double>(grad->data(), af::size);
        gk = std::span<double>(grad->data() + k_offset(), p.k_weights.size());
    }
    WarmupLoss loss;
    for (const auto& c : ctx) {
        // descent direction of -log pi is -grad log pi
        loss.policy -= inv_n * policy_term(c, p, -inv_n, ga);
        const auto kp = k_distribution(p, c.state_features);
        loss.k_head -= inv_n * std::log(kp[static_cast<std::size_t>(c.k_label)]);
        if (grad) accumulate_k_log_prob_grad(c.state_features, kp, c.k_label, -cfg.eta * inv_n, gk);
    }
    loss.total = loss.policy + cfg.eta * loss.k_head;
    return loss;
}

void sgd_step(AgentParams& p, std::span<double> grad, double lr, double max_norm) {
    clip_global_norm(grad, max_norm);
    auto flat = flatten_params(p);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= lr * grad[i];
    unflatten_params(flat, p);
}

}  // namespace

std::vector<double> flatten_params(const AgentParams& p) {
    std::vector<double> out;
    out.reserve(p.action_weights.size() + p.k_weights.size() + p.value_weights.size());
    out.insert(out.end(), p.action_weights.begin(), p.action_weights.end());
    out.insert(out.end(), p.k_weights.begin(), p.k_weights.end());
    out.insert(out.end(), p.value_weights.begin(), p.value_weights.end());
    return out;
}

void unflatten_params(std::span<const double> flat, AgentParams& p) {
    auto it = flat.begin();
    std::copy_n(it, p.action_weights.size(), p.action_weights.begin());
    it += static_cast<std::ptrdiff_t>(p.action_weights.size());
    std::copy_n(it, p.k_weights.size(), p.k_weights.begin());
    it += static_cast<std::ptrdiff_t>(p.k_weights.size());
    std::copy_n(it, p.value_weights.size(), p.value_weights.begin());
}

double global_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double clip_global_norm(std::span<double> v, double max_norm) {
    const double n = global_norm(v);
    if (n > max_norm && n > 0.0) {
        const double scale = max_norm / n;
        for (double& x : v) x *= scale;
    }
    return n;
}

std::vector<ExpertEpisode> make_expert_episodes(std::span<const TaskSpec> tasks) {
    std::vector<ExpertEpisode> out;
    out.reserve(tasks.size());
    for (const auto& t : tasks) {
        auto [s, obs] = reset(t);
        out.push_back({t, expert_plan(s, t)});
    }
    return out;
}

int select_k_label(std::span<const int> candidates, std::span<const double> scores, double lambda_k) {
    std::size_t best = 0;
    double best_val = scores[0] - lambda_k * candidates[0];
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double v = scores[i] - lambda_k * candidates[i];
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    return candidates[best];
}

double behavior_clone_loss(const AgentParams& params, std::span<const ExpertEpisode> episodes) {
    const auto states = replay_states(episodes);
    double loss = 0.0;
    std::size_t n = 0;
    for (std::size_t e = 0; e < episodes.size(); ++e)
        for (std::size_t t = 0; t < episodes[e].plan.size(); ++t) {
            loss -= log_prob_action(params, states[e][t], episodes[e].task, std::nullopt, episodes[e].plan[t]);
            ++n;
        }
    return n ? loss / static_cast<double>(n) : 0.0;
}

AgentParams behavior_clone(std::span<const ExpertEpisode> episodes, const TrainConfig& cfg,
                           std::vector<double>* loss_curve) {
    AgentParams p = AgentParams::zeros(cfg.K_max, cfg.temperature);
    apply_foresight_prior(p, cfg.prior);
    const auto states = replay_states(episodes);
    std::vector<CachedContext> ctx;
    for (std::size_t e = 0; e < episodes.size(); ++e)
        for (std::size_t t = 0; t < episodes[e].plan.size(); ++t)
            ctx.push_back(cache_context(states[e][t], episodes[e].task, episodes[e].plan[t], std::nullopt, 0));
    if (ctx.empty()) throw EmptyDataset("behavior cloning requires expert steps");
    const double inv_n = 1.0 / static_cast<double>(ctx.size());
    std::vector<double> grad(af::size);
    for (int epoch = 0; epoch < cfg.epochs_bc; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (const auto& c : ctx) loss -= inv_n * policy_term(c, p, -inv_n, grad);
        if (loss_curve) loss_curve->push_back(loss);
        clip_global_norm(grad, cfg.max_grad_norm);
        for (std::size_t j = 0; j < grad.size(); ++j) p.action_weights[j] -= cfg.learning_rate_bc * grad[j];
    }
    if (loss_curve) {
        double loss = 0.0;
        for (const auto& c : ctx) loss -= inv_n * policy_term(c, p, 0.0, {});
        loss_curve->push_back(loss);
    }
    return p;
}

AgentParams behavior_clone(int n_tasks, std::uint64_t seed, const TrainConfig& cfg) {
    if (n_tasks <= 0) throw Error("behavior_clone requires n_tasks > 0");
    std::vector<TaskSpec> tasks;
    for (int i = 0; i < n_tasks; ++i)
        tasks.push_back(sample_task(kHouseFamilies[static_cast<std::size_t>(i) % kHouseFamilies.size()],
                                    derive_seed(seed, "bc-task", static_cast<std::uint64_t>(i))));
    const auto episodes = make_expert_episodes(tasks);
    return behavior_clone(episodes, cfg);
}

std::vector<PseudoLabeledStep> pseudo_label_dataset(std::span<const ExpertEpisode> episodes, const NoisyWorldModel& wm,
                                                    const AgentParams& pi0, const TrainConfig& cfg,
                                                    std::uint64_t seed) {
    const auto states = replay_states(episodes);
    std::vector<PseudoLabeledStep> out;
    std::uint64_t index = 0;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const auto& ep = episodes[e];
        for (std::size_t t = 0; t < ep.plan.size(); ++t, ++index) {
            const auto& s = states[e][t];
            const auto remaining = std::span<const Action>(ep.plan).subspan(t);
            const int k_hi = std::min<int>(cfg.K_max, static_cast<int>(remaining.size()));
            BudgetMeter meter;
            Rng rng(derive_seed(seed, "label", index));
            const auto full = imagine_teacher_forced(wm, s, ep.task, remaining, k_hi, meter, rng);

            PseudoLabeledStep rec;
            rec.state = full.start_state;
            rec.expert_action = action_string(ep.plan[t], ep.task);
            rec.episode = e;
            rec.step = static_cast<int>(t);
            std::vector<std::optional<ReflectionSummary>> summaries;
            for (int k = 0; k <= k_hi; ++k) {
                // prefix of the cached rollout; a predicted terminal ends every longer horizon early
                ImaginedTrajectory prefix;
                prefix.start_state = full.start_state;
                prefix.requested_k = k;
                const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(k), full.steps.size());
                prefix.steps.assign(full.steps.begin(), full.steps.begin() + static_cast<std::ptrdiff_t>(len));
                std::optional<ReflectionSummary> summary;
                if (k > 0) summary = reflect(prefix, ep.task);
                rec.k_candidates.push_back(k);
                rec.scores.push_back(log_prob_action(pi0, s, ep.task, summary, ep.plan[t]));
                rec.penalized_scores.push_back(rec.scores.back() - cfg.lambda_k * k);
                rec.lookahead_summaries.push_back(lookahead_summary_text(prefix));
                summaries.push_back(std::move(summary));
            }
            rec.k_label = select_k_label(rec.k_candidates, rec.scores, cfg.lambda_k);
            rec.label_summary = summaries[static_cast<std::size_t>(rec.k_label)];
            out.push_back(std::move(rec));
        }
    }
    return out;
}

WarmupLoss warmup_loss(const AgentParams& params, std::span<const PseudoLabeledStep> labeled,
                       std::span<const ExpertEpisode> episodes, const TrainConfig& cfg) {
    const auto ctx = warmup_contexts(labeled, episodes);
    return warmup_eval(params, ctx, cfg, nullptr);
}

std::vector<double> warmup_gradient(const AgentParams& params, std::span<const PseudoLabeledStep> labeled,
                                    std::span<const ExpertEpisode> episodes, const TrainConfig& cfg) {
    const auto ctx = warmup_contexts(labeled, episodes);
    std::vector<double> grad;
    warmup_eval(params, ctx, cfg, &grad);
    return grad;
}

AgentParams warmup_train(const AgentParams& pi0, std::span<const PseudoLabeledStep> labeled,
                         std::span<const ExpertEpisode> episodes, const TrainConfig& cfg,
                         std::vector<WarmupLoss>* loss_curve) {
    const auto ctx = warmup_contexts(labeled, episodes);
    AgentParams p = pi0;
    std::vector<double> grad;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto loss = warmup_eval(p, ctx, cfg, &grad);
        if (loss_curve) loss_curve->push_back(loss);
        sgd_step(p, grad, cfg.learning_rate_warmup, cfg.max_grad_norm);
    }
    if (loss_curve) loss_curve->push_back(warmup_eval(p, ctx, cfg, nullptr));
    return p;
}

double shaped_reward(double env_reward, int k, bool valid, bool done_success, const TrainConfig& cfg) {
    double r = env_reward - cfg.lambda_k * k - cfg.lambda_step;
    if (done_success) r += cfg.success_bonus;
    if (!valid) r += cfg.invalid_penalty;
    return r;
}

A2CTargets a2c_targets(const AgentParams& snapshot, std::span<const StepRecord> batch, const TaskSpec& task,
                       const TrainConfig& cfg) {
    A2CTargets t;
    const std::size_t n = std::max(1, cfg.td_steps);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double target = 0.0;
        double discount = 1.0;
        std::size_t last = i;
        for (std::size_t j = i; j < batch.size() && j < i + n; ++j) {
            last = j;
            target += discount * batch[j].shaped_reward;
            discount *= cfg.gamma;
            if (batch[j].done) break;
        }
        if (!batch[last].done) target += discount * value(snapshot, batch[last].next_state, task);
        t.td_target.push_back(target);
        t.advantage.push_back(target - value(snapshot, batch[i].state, task));
    }
    return t;
}

A2CLoss a2c_loss(const AgentParams& p, std::span<const StepRecord> batch, const TaskSpec& task,
                 const A2CTargets& targets, const TrainConfig& cfg, std::vector<double>* grad) {
    if (batch.empty()) throw EmptyDataset("A2C update requires a non-empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    std::span<double> ga, gk, gv;
    if (grad) {
        grad->assign(af::size + p.k_weights.size() + p.value_weights.size(), 0.0);
        ga = std::span<double>(grad->data(), af::size);
        gk = std::span<double>(grad->data() + k_offset(), p.k_weights.size());
        gv = std::span<double>(grad->data() + value_offset(p), p.value_weights.size());
    }
    A2CLoss loss;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& r = batch[i];
        const double adv = targets.advantage[i];
        const auto ctx = cache_context(r.state, task, r.action, r.summary, r.sampled_k);
        const auto& x = ctx.state_features;
        const auto kp = k_distribution(p, x);
        const double log_pk = std::log(kp[static_cast<std::size_t>(r.sampled_k)]);
        const double log_pi = policy_term(ctx, p, -adv * inv_n, ga);
        loss.act -= inv_n * adv * (log_pk + log_pi);

        const double v = dot(p.value_weights, x);
        const double err = v - targets.td_target[i];
        loss.value += inv_n * err * err;

        const double h = entropy(kp);
        loss.ent -= inv_n * h;

        if (grad) {
            accumulate_k_log_prob_grad(x, kp, r.sampled_k, -adv * inv_n, gk);
            for (std::size_t j = 0; j < x.size(); ++j) gv[j] += cfg.alpha * 2.0 * inv_n * err * x[j];
            accumulate_k_entropy_grad(x, kp, -cfg.beta * inv_n, gk);
        }
    }
    loss.total = loss.act + cfg.alpha * loss.value + cfg.beta * loss.ent;
    return loss;
}

std::pair<AgentParams, A2CLoss> a2c_update(const AgentParams& params, std::span<const StepRecord> batch,
                                           const TaskSpec& task, const TrainConfig& cfg, bool critic_only,
                                           AdamState* adam) {
    const auto targets = a2c_targets(params, batch, task, cfg);
    std::vector<double> grad;
    A2CLoss loss = a2c_loss(params, batch, task, targets, cfg, &grad);
    if (critic_only) std::fill(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(value_offset(params)), 0.0);
    loss.grad_norm = clip_global_norm(grad, cfg.max_grad_norm);
    loss.clipped_grad_norm = global_norm(grad);
    AgentParams next = params;
    auto flat = flatten_params(next);
    if (adam && cfg.rl_optimizer == Optimizer::adam) {
        if (adam->m.size() != flat.size()) {
            adam->m.assign(flat.size(), 0.0);
            adam->v.assign(flat.size(), 0.0);
            adam->steps = 0;
        }
        adam->steps += 1;
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam->steps));
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam->steps));
        for (std::size_t i = 0; i < flat.size(); ++i) {
            adam->m[i] = cfg.adam_beta1 * adam->m[i] + (1.0 - cfg.adam_beta1) * grad[i];
            adam->v[i] = cfg.adam_beta2 * adam->v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            flat[i] -= cfg.learning_rate_rl * (adam->m[i] / c1) / (std::sqrt(adam->v[i] / c2) + cfg.adam_epsilon);
        }
    } else {
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= cfg.learning_rate_rl * grad[i];
    }
    unflatten_params(flat, next);
    return {std::move(next), loss};
}

OnlineResult online_train(const AgentParams& params, std::span<const TaskSpec> tasks, const NoisyWorldModel& wm,
                          const TrainConfig& cfg, int episodes, std::uint64_t seed) {
    OnlineResult out{params, {}};
    if (episodes <= 0) return out;
    if (tasks.empty()) throw Error("online training requires tasks");
    const auto controller = LookaheadController::learned(KSelectMode::sample);
    AdamState adam;
    for (int ep = 0; ep < episodes; ++ep) {
        const TaskSpec& task = tasks[static_cast<std::size_t>(ep) % tasks.size()];
        EpisodeStreams streams(derive_seed(seed, "rl-episode", static_cast<std::uint64_t>(ep)));
        const bool critic_only = ep < cfg.critic_warmup_episodes;
        BudgetMeter meter;
        auto [state, obs] = reset(task);
        std::vector<StepRecord> batch;
        CurveRow row;
        row.episode = ep;
        bool done = false;
        while (!done) {
            auto rec = poimdp_step(out.params, wm, state, task, controller, meter, streams);
            const bool success = rec.env_reward > 0.0;
            rec.shaped_reward = shaped_reward(rec.env_reward, rec.sampled_k, rec.valid, success, cfg);
            row.shaped_return += rec.shaped_reward;
            row.env_return += rec.env_reward;
            row.mean_k += rec.sampled_k;
            row.entropy_k += entropy(k_distribution(out.params, rec.state, task));
            done = rec.done;
            state = rec.next_state;
            batch.push_back(std::move(rec));
            if (cfg.per_step_updates) {
                auto [next, loss] = a2c_update(out.params, std::span<const StepRecord>(&batch.back(), 1), task, cfg,
                                               critic_only, &adam);
                out.params = std::move(next);
                row.loss = loss;
            }
        }
        row.mean_k /= static_cast<double>(batch.size());
        row.entropy_k /= static_cast<double>(batch.size());
        if (!cfg.per_step_updates) {
            auto [next, loss] = a2c_update(out.params, batch, task, cfg, critic_only, &adam);
            out.params = std::move(next);
            row.loss = loss;
        }
        out.curve.push_back(row);
    }
    return out;
}

}  // namespace itp
