#include "itp/evaluation.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "itp/errors.hpp"
#include "itp/rng.hpp"

namespace itp {

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

SweepPoint summarize(std::span<const EpisodeResult> results) {
    const auto sr = success_rate(results);
    SweepPoint p;
    p.sr = sr.overall;
    p.n = sr.n;
    p.per_family_sr = sr.per_family;
    p.per_family_n = sr.per_family_n;
    p.mean_budget = mean_budget(results);
    return p;
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t task_index) {
    return derive_seed(seed, "episode", static_cast<std::uint64_t>(task_index));
}

}  // namespace

EpisodeResult run_episode(const TaskSpec& task, const AgentParams& params, const NoisyWorldModel& wm,
                          const LookaheadController& controller, std::uint64_t seed, UnitCosts costs) {
    EpisodeResult r;
    r.task_family = task.family;
    r.task_seed = task.instance_seed;
    r.seed = seed;
    EpisodeStreams streams(seed);
    BudgetMeter meter;
    meter.unit_cost_policy = costs.policy;
    meter.unit_cost_wm = costs.wm;
    auto [state, obs] = reset(task);
    double reward = 0.0;
    bool done = false;
    while (!done) {
        auto rec = poimdp_step(params, wm, state, task, controller, meter, streams);
        r.per_step_k.push_back(rec.sampled_k);
        reward += rec.env_reward;
        done = rec.done;
        state = std::move(rec.next_state);
    }
    r.steps = state.step_count;
    r.success = reward == 1.0;
    r.policy_calls = meter.policy_calls;
    r.wm_calls = meter.wm_calls;
    r.total_budget_units = meter.total();
    return r;
}

std::vector<EpisodeResult> evaluate_grid_serial(std::span<const TaskSpec> tasks, const AgentParams& params,
                                                const NoisyWorldModel& wm, const LookaheadController& controller,
                                                std::span<const std::uint64_t> seeds, UnitCosts costs) {
    std::vector<EpisodeResult> out;
    out.reserve(tasks.size() * seeds.size());
    for (std::size_t i = 0; i < tasks.size(); ++i)
        for (auto seed : seeds) {
            auto r = run_episode(tasks[i], params, wm, controller, episode_seed(seed, i), costs);
            r.task_index = i;
            out.push_back(std::move(r));
        }
    return out;
}

std::vector<EpisodeResult> evaluate_grid(std::span<const TaskSpec> tasks, const AgentParams& params,
                                         const NoisyWorldModel& wm, const LookaheadController& controller,
                                         std::span<const std::uint64_t> seeds, UnitCosts costs) {
    const std::size_t n_seeds = seeds.size();
    const auto total = static_cast<std::int64_t>(tasks.size() * n_seeds);
    std::vector<EpisodeResult> out(static_cast<std::size_t>(total));
    // Each slot is written by exactly one iteration, so the layout matches the serial order.
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t idx = 0; idx < total; ++idx) {
        const auto u = static_cast<std::size_t>(idx);
        const std::size_t i = u / n_seeds;
        auto r = run_episode(tasks[i], params, wm, controller, episode_seed(seeds[u % n_seeds], i), costs);
        r.task_index = i;
        out[u] = std::move(r);
    }
    return out;
}

SuccessRate success_rate(std::span<const EpisodeResult> results) {
    if (results.empty()) throw EmptyResults("success_rate over no episodes");
    SuccessRate sr;
    std::map<Family, std::size_t> wins;
    std::size_t total_wins = 0;
    for (const auto& r : results) {
        sr.per_family_n[r.task_family] += 1;
        if (r.success) {
            wins[r.task_family] += 1;
            ++total_wins;
        }
    }
    sr.n = results.size();
    sr.overall = static_cast<double>(total_wins) / static_cast<double>(sr.n);
    for (const auto& [f, n] : sr.per_family_n) sr.per_family[f] = static_cast<double>(wins[f]) / static_cast<double>(n);
    return sr;
}

double mean_budget(std::span<const EpisodeResult> results) {
    if (results.empty()) throw EmptyResults("mean_budget over no episodes");
    double s = 0.0;
    for (const auto& r : results) s += r.total_budget_units;
    return s / static_cast<double>(results.size());
}

double mean_k(std::span<const EpisodeResult> results) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : results) {
        for (int k : r.per_step_k) s += k;
        n += r.per_step_k.size();
    }
    return n ? s / static_cast<double>(n) : 0.0;
}

double normalized_budget_value(double budget, double t0, double tk) {
    if (!(tk > t0)) throw DegenerateEndpoints("T(K_max) must exceed T(0)");
    return (budget - t0) / (tk - t0);
}

std::map<int, double> normalized_budget(const std::map<int, double>& mean_budget_at_k, int K_max) {
    const auto lo = mean_budget_at_k.find(0);
    const auto hi = mean_budget_at_k.find(K_max);
    if (lo == mean_budget_at_k.end() || hi == mean_budget_at_k.end())
        throw DegenerateEndpoints("normalized budget needs T(0) and T(K_max)");
    std::map<int, double> out;
    for (const auto& [k, t] : mean_budget_at_k) out[k] = normalized_budget_value(t, lo->second, hi->second);
    return out;
}

SweepReport sweep_fixed_k(const AgentParams& params, const NoisyWorldModel& wm, std::span<const TaskSpec> tasks,
                          std::span<const std::uint64_t> seeds, UnitCosts costs) {
    if (params.K_max < 2) throw ConfigError("sweep requires K_max >= 2");
    SweepReport rep;
    rep.K_max = params.K_max;
    rep.n_seeds = seeds.size();
    std::map<int, double> budgets;
    for (int k = 0; k <= params.K_max; ++k) {
        rep.fixed_results.push_back(evaluate_grid(tasks, params, wm, LookaheadController::fixed(k), seeds, costs));
        rep.per_k.push_back(summarize(rep.fixed_results.back()));
        budgets[k] = rep.per_k.back().mean_budget;
    }
    const auto nb = normalized_budget(budgets, params.K_max);
    for (int k = 0; k <= params.K_max; ++k) rep.per_k[static_cast<std::size_t>(k)].nb = nb.at(k);
    const double t0 = budgets.at(0), tk = budgets.at(params.K_max);

    rep.adaptive_results = evaluate_grid(tasks, params, wm, LookaheadController::learned(), seeds, costs);
    rep.adaptive = summarize(rep.adaptive_results);
    rep.adaptive.nb = normalized_budget_value(rep.adaptive.mean_budget, t0, tk);
    rep.random_results = evaluate_grid(tasks, params, wm, LookaheadController::random(), seeds, costs);
    rep.random = summarize(rep.random_results);
    rep.random.nb = normalized_budget_value(rep.random.mean_budget, t0, tk);
    rep.n_episodes = rep.adaptive_results.size();
    return rep;
}

BootstrapCI paired_bootstrap(std::span<const double> a, std::span<const double> b, int resamples, std::uint64_t seed,
                             double level) {
    if (a.size() != b.size() || a.empty()) throw Error("paired_bootstrap needs equal, non-empty samples");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = a[i] - b[i];
        mean += d[i];
    }
    BootstrapCI ci;
    ci.mean_diff = mean / static_cast<double>(n);
    Rng rng(seed);
    std::vector<double> stats(static_cast<std::size_t>(resamples));
    for (auto& s : stats) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += d[rng.below(n)];
        s = acc / static_cast<double>(n);
    }
    std::sort(stats.begin(), stats.end());
    const double tail = (1.0 - level) / 2.0;
    const auto at = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1) + 0.5));
        return stats[std::min(idx, stats.size() - 1)];
    };
    ci.lo = at(tail);
    ci.hi = at(1.0 - tail);
    return ci;
}

std::vector<double> success_vector(std::span<const EpisodeResult> results) {
    std::vector<double> v;
    v.reserve(results.size());
    for (const auto& r : results) v.push_back(r.success ? 1.0 : 0.0);
    return v;
}

std::vector<double> nb_vector(std::span<const EpisodeResult> results, double t0, double tk) {
    std::vector<double> v;
    v.reserve(results.size());
    for (const auto& r : results) v.push_back(normalized_budget_value(r.total_budget_units, t0, tk));
    return v;
}

std::vector<double> fold_success_rates(std::span<const EpisodeResult> results, std::size_t n_tasks, int folds) {
    if (folds <= 0 || n_tasks == 0) throw ConfigError("fold count must be positive");
    std::vector<double> wins(static_cast<std::size_t>(folds), 0.0), count(static_cast<std::size_t>(folds), 0.0);
    for (const auto& r : results) {
        const std::size_t f = r.task_index * static_cast<std::size_t>(folds) / n_tasks;
        count[f] += 1.0;
        if (r.success) wins[f] += 1.0;
    }
    std::vector<double> out;
    for (std::size_t f = 0; f < wins.size(); ++f) out.push_back(count[f] > 0 ? wins[f] / count[f] : 0.0);
    return out;
}

AblationReport ablation_no_rt(const AgentParams& warmup_params, const AgentParams& rl_params,
                              const NoisyWorldModel& wm, std::span<const TaskSpec> tasks,
                              std::span<const std::uint64_t> seeds, std::uint64_t bootstrap_seed, int resamples,
                              int folds) {
    const auto ctrl = LookaheadController::learned();
    const auto warm = evaluate_grid(tasks, warmup_params, wm, ctrl, seeds);
    const auto rl = evaluate_grid(tasks, rl_params, wm, ctrl, seeds);
    AblationReport rep;
    rep.n = warm.size();
    rep.sr_warmup = success_rate(warm).overall;
    rep.sr_rl = success_rate(rl).overall;
    rep.diff = paired_bootstrap(success_vector(rl), success_vector(warm), resamples, bootstrap_seed);
    if (folds > 0) {
        const auto fw = fold_success_rates(warm, tasks.size(), folds);
        const auto fr = fold_success_rates(rl, tasks.size(), folds);
        for (std::size_t f = 0; f < fw.size(); ++f) rep.fold_diffs.push_back(fr[f] - fw[f]);
    }
    return rep;
}

std::string sweep_to_csv(const SweepReport& report) {
    std::string out = "controller,k,family,sr,mean_budget,nb,n\n";
    const auto rows = [&](const std::string& name, const std::string& k, const SweepPoint& p) {
        for (const auto& [f, sr] : p.per_family_sr)
            out += name + "," + k + "," + std::string(family_name(f)) + "," + fmt(sr) + ",,," +
                   std::to_string(p.per_family_n.at(f)) + "\n";
        out += name + "," + k + ",Overall," + fmt(p.sr) + "," + fmt(p.mean_budget) + "," + fmt(p.nb) + "," +
               std::to_string(p.n) + "\n";
    };
    for (std::size_t k = 0; k < report.per_k.size(); ++k)
        rows("fixed", std::to_string(k), report.per_k[k]);
    rows("learned", "-", report.adaptive);
    rows("random", "-", report.random);
    return out;
}

std::string sweep_to_json(const SweepReport& report) {
    using nlohmann::json;
    const auto point = [](const SweepPoint& p) {
        return json{{"sr", p.sr}, {"mean_budget", p.mean_budget}, {"nb", p.nb}, {"n", p.n}};
    };
    json j;
    j["K_max"] = report.K_max;
    j["n_episodes"] = report.n_episodes;
    j["n_seeds"] = report.n_seeds;
    json per_k = json::array();
    for (std::size_t k = 0; k < report.per_k.size(); ++k) {
        auto p = point(report.per_k[k]);
        p["k"] = k;
        per_k.push_back(p);
    }
    j["per_k"] = per_k;
    j["adaptive"] = point(report.adaptive);
    j["adaptive"]["mean_k"] = mean_k(report.adaptive_results);
    j["random"] = point(report.random);
    j["random"]["mean_k"] = mean_k(report.random_results);
    return j.dump(2) + "\n";
}

void write_plot_data(const SweepReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
    std::ofstream sr(path("sr_vs_k.dat")), nb(path("nb_vs_k.dat")), sc(path("sr_vs_nb.dat"));
    sr << "# k sr\n";
    nb << "# k nb\n";
    sc << "# label nb sr\n";
    for (std::size_t k = 0; k < report.per_k.size(); ++k) {
        sr << k << " " << fmt(report.per_k[k].sr) << "\n";
        nb << k << " " << fmt(report.per_k[k].nb) << "\n";
        sc << "fixed:" << k << " " << fmt(report.per_k[k].nb) << " " << fmt(report.per_k[k].sr) << "\n";
    }
    sc << "learned " << fmt(report.adaptive.nb) << " " << fmt(report.adaptive.sr) << "\n";
    sc << "random " << fmt(report.random.nb) << " " << fmt(report.random.sr) << "\n";
}

}  // namespace itp
