#include <cstdio>
#include <exception>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "itp/errors.hpp"
#include "itp/io.hpp"
#include "itp/pipeline.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, stale_artifact = 3, runtime_failure = 4 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive imagination-horizon agent pipeline"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path, benchmark, controller, out;
    std::string seed, k_max, epsilon, episodes;
    app.add_option("--config", config_path, "key=value configuration file");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--benchmark", benchmark, "house or lab")->check(CLI::IsMember({"house", "lab"}));
    app.add_option("--k-max", k_max, "largest lookahead horizon");
    app.add_option("--epsilon", epsilon, "world-model error rate used by rl, eval, sweep and report");
    app.add_option("--episodes", episodes,
                   "rollout episodes (gen-data), RL episodes (rl) or tasks per seed (eval, sweep, report)");
    app.add_option("--out", out, "run directory");
    app.add_option("--controller", controller, "reactive | fixed:K | random | heuristic | learned");

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "expert demonstrations, behavior cloning and rollouts"},
        {"train-wm", "fit the tabular world model"},
        {"label-k", "pseudo-label lookahead horizons"},
        {"warmup", "warm-up training on labeled horizons"},
        {"rl", "online actor-critic training"},
        {"eval", "evaluate one controller"},
        {"sweep", "fixed-k, adaptive and random sweep"},
        {"report", "success-rate table and ablation"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_error;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        if (!config_path.empty() && !itp::file_exists(config_path))
            throw itp::ConfigError("config file not found: " + config_path);
        const std::string file_text = config_path.empty() ? std::string{} : itp::read_file(config_path);
        std::vector<std::pair<std::string, std::string>> overrides;
        if (!benchmark.empty()) overrides.emplace_back("benchmark", benchmark);
        if (!seed.empty()) overrides.emplace_back("seed", seed);
        if (!k_max.empty()) overrides.emplace_back("k_max", k_max);
        if (!epsilon.empty()) overrides.emplace_back("epsilon", epsilon);
        if (!out.empty()) overrides.emplace_back("out", out);
        if (!controller.empty()) overrides.emplace_back("controller", controller);
        if (!episodes.empty()) {
            if (command == "gen-data")
                overrides.emplace_back("n_rollout_episodes", episodes);
            else if (command == "rl")
                overrides.emplace_back("n_rl_episodes", episodes);
            else if (command == "eval" || command == "sweep" || command == "report")
                overrides.emplace_back("n_eval_episodes", episodes);
            else
                throw itp::ConfigError("--episodes has no meaning for " + command);
        }
        const itp::RunConfig cfg = itp::resolve_config(file_text, overrides);
        std::printf("%s\n", itp::run_command(command, cfg).c_str());
        return ok;
    } catch (const itp::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return config_error;
    } catch (const itp::StaleArtifact& e) {
        std::fprintf(stderr, "stale artifact: %s\n", e.what());
        return stale_artifact;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return runtime_failure;
    }
}
