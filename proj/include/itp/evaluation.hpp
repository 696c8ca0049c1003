#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itp/agent.hpp"
#include "itp/controller.hpp"
#include "itp/env.hpp"
#include "itp/imagination.hpp"
#include "itp/world_model.hpp"

namespace itp {

struct UnitCosts {
    double policy = 1.0;
    double wm = 1.0;
};

struct EpisodeResult {
    Family task_family = Family::PICK;
    std::size_t task_index = 0;
    std::uint64_t task_seed = 0;
    std::uint64_t seed = 0;
    bool success = false;
    int steps = 0;
    double total_budget_units = 0.0;
    std::vector<int> per_step_k;
    std::int64_t policy_calls = 0;
    std::int64_t wm_calls = 0;
    bool operator==(const EpisodeResult&) const = default;
};

EpisodeResult run_episode(const TaskSpec& task, const AgentParams& params, const NoisyWorldModel& wm,
                          const LookaheadController& controller, std::uint64_t seed, UnitCosts costs = {});

// Every task is paired with every seed; episode (i, j) runs with
// derive_seed(seeds[j], "episode", i). Results are ordered by (task, seed).
std::vector<EpisodeResult> evaluate_grid_serial(std::span<const TaskSpec> tasks, const AgentParams& params,
                                                const NoisyWorldModel& wm, const LookaheadController& controller,
                                                std::span<const std::uint64_t> seeds, UnitCosts costs = {});
std::vector<EpisodeResult> evaluate_grid(std::span<const TaskSpec> tasks, const AgentParams& params,
                                         const NoisyWorldModel& wm, const LookaheadController& controller,
                                         std::span<const std::uint64_t> seeds, UnitCosts costs = {});

struct SuccessRate {
    double overall = 0.0;
    std::size_t n = 0;
    std::map<Family, double> per_family;
    std::map<Family, std::size_t> per_family_n;
};
SuccessRate success_rate(std::span<const EpisodeResult> results);
double mean_budget(std::span<const EpisodeResult> results);
double mean_k(std::span<const EpisodeResult> results);

// NB(k) = (T(k) - T(0)) / (T(K_max) - T(0)).
std::map<int, double> normalized_budget(const std::map<int, double>& mean_budget_at_k, int K_max);
double normalized_budget_value(double budget, double t0, double tk);

struct SweepPoint {
    double sr = 0.0;
    double mean_budget = 0.0;
    double nb = 0.0;
    std::size_t n = 0;
    std::map<Family, double> per_family_sr;
    std::map<Family, std::size_t> per_family_n;
};

struct SweepReport {
    int K_max = 0;
    std::vector<SweepPoint> per_k;  // index k
    SweepPoint adaptive;
    SweepPoint random;
    std::size_t n_episodes = 0;  // per controller
    std::size_t n_seeds = 0;
    std::vector<std::vector<EpisodeResult>> fixed_results;
    std::vector<EpisodeResult> adaptive_results;
    std::vector<EpisodeResult> random_results;
};

SweepReport sweep_fixed_k(const AgentParams& params, const NoisyWorldModel& wm, std::span<const TaskSpec> tasks,
                          std::span<const std::uint64_t> seeds, UnitCosts costs = {});

struct BootstrapCI {
    double mean_diff = 0.0;  // mean(a - b)
    double lo = 0.0;
    double hi = 0.0;
    bool excludes_zero() const { return lo > 0.0 || hi < 0.0; }
};
// Paired percentile bootstrap of mean(a - b) over episodes.
BootstrapCI paired_bootstrap(std::span<const double> a, std::span<const double> b, int resamples,
                             std::uint64_t seed, double level = 0.95);

std::vector<double> success_vector(std::span<const EpisodeResult> results);
// Per-episode NB against fixed-sweep endpoints.
std::vector<double> nb_vector(std::span<const EpisodeResult> results, double t0, double tk);

struct AblationReport {
    double sr_warmup = 0.0;
    double sr_rl = 0.0;
    BootstrapCI diff;  // rl minus warm-up
    std::size_t n = 0;
    std::vector<double> fold_diffs;  // empty unless folds requested
};

AblationReport ablation_no_rt(const AgentParams& warmup_params, const AgentParams& rl_params,
                              const NoisyWorldModel& wm, std::span<const TaskSpec> tasks,
                              std::span<const std::uint64_t> seeds, std::uint64_t bootstrap_seed,
                              int resamples = 10000, int folds = 0);

// Mean SR of each contiguous task fold; tasks are split into `folds` groups
// by task index.
std::vector<double> fold_success_rates(std::span<const EpisodeResult> results, std::size_t n_tasks, int folds);

std::string sweep_to_csv(const SweepReport& report);
std::string sweep_to_json(const SweepReport& report);
// Writes sr_vs_k.dat, nb_vs_k.dat and sr_vs_nb.dat into dir.
void write_plot_data(const SweepReport& report, const std::string& dir);

}  // namespace itp
