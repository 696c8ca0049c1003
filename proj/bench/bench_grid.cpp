// Times the episode grid with the serial loop and with the OpenMP loop on the
// same trained agent, and checks that both produce the same results.

#include <omp.h>

#include <chrono>
#include <cstdio>

#include "itp/evaluation.hpp"
#include "stack.hpp"

using namespace itp;
using namespace itp::testing;

template <class F>
double best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

int main() {
    const RunConfig cfg = default_config(Benchmark::house);
    const auto st = build_stack(cfg);
    const auto wm = st.noisy(cfg.wm_epsilon);
    std::vector<TaskSpec> tasks;
    for (int i = 0; i < cfg.n_eval_episodes; ++i) tasks.push_back(st.tasks[static_cast<std::size_t>(i) % st.tasks.size()]);
    const auto seeds = eval_seeds(cfg);

    std::printf("%d tasks x %zu seeds, %d threads\n", cfg.n_eval_episodes, seeds.size(), omp_get_max_threads());
    std::printf("%-10s %10s %10s %8s %6s\n", "controller", "serial s", "omp s", "speedup", "equal");
    for (const auto& [name, ctl] : {std::pair{"fixed-5", LookaheadController::fixed(cfg.K_max)},
                                    std::pair{"adaptive", LookaheadController::learned()}}) {
        std::vector<EpisodeResult> a, b;
        const double ts = best_of(3, [&] { a = evaluate_grid_serial(tasks, st.rl, wm, ctl, seeds); });
        const double tp = best_of(3, [&] { b = evaluate_grid(tasks, st.rl, wm, ctl, seeds); });
        std::printf("%-10s %10.4f %10.4f %8.2f %6s\n", name, ts, tp, ts / tp, a == b ? "yes" : "NO");
        if (a != b) return 1;
    }
    return 0;
}
