#include "itp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "itp/errors.hpp"
#include "itp/evaluation.hpp"
#include "itp/rng.hpp"
#include "itp/training.hpp"

namespace itp {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Manifest-backed view of the run directory for one command.
class Run {
public:
    explicit Run(const RunConfig& cfg) : cfg_(cfg), dir_(cfg.output_dir), manifest_(load_manifest(dir_)) {}

    const RunConfig& cfg() const { return cfg_; }

    // Training stages must see the configuration gen-data ran with.
    void require_same_config() const {
        if (manifest_.config_hash.empty()) throw StaleArtifact("no manifest in " + dir_ + "; run gen-data first");
        if (manifest_.config_hash != config_hash(cfg_))
            throw ConfigError("configuration differs from the one this run directory was generated with");
    }

    std::string input(const std::string& file) {
        std::string content = read_artifact(dir_, manifest_, file);
        inputs_[file] = checksum(content);
        return content;
    }

    bool has(const std::string& file) const {
        for (const auto& [_, r] : manifest_.stages)
            if (r.outputs.count(file)) return true;
        return false;
    }

    void output(const std::string& file, std::string content) { outputs_[file] = std::move(content); }

    void fresh() { manifest_ = RunManifest{config_hash(cfg_), kToolVersion, {}, {}}; }

    void commit(const std::string& stage) {
        fs::create_directories(dir_);
        StageRecord rec{config_hash(cfg_), inputs_, {}};
        for (const auto& [file, content] : outputs_) {
            write_file((fs::path(dir_) / file).string(), content);
            rec.outputs[file] = checksum(content);
        }
        const auto pos = std::find(kTrainingStages.begin(), kTrainingStages.end(), stage);
        if (pos != kTrainingStages.end())
            for (auto it = pos + 1; it != kTrainingStages.end(); ++it) manifest_.stages.erase(*it);
        manifest_.stages[stage] = std::move(rec);
        manifest_.timestamps = {{stage, utc_now()}};
        save_manifest(dir_, manifest_);
    }

    std::string path(const std::string& file) const { return (fs::path(dir_) / file).string(); }

private:
    static std::string utc_now() {
        const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    RunConfig cfg_;
    std::string dir_;
    RunManifest manifest_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
};

TaskOptions task_options(const RunConfig& cfg) { return TaskOptions{cfg.lab_chain_len}; }

std::vector<TaskSpec> load_tasks(Run& run) {
    std::vector<TaskSpec> tasks;
    std::istringstream in(run.input("tasks.jsonl"));
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) tasks.push_back(task_from_json(line, task_options(run.cfg())));
    const bool lab = run.cfg().benchmark == Benchmark::lab;
    for (const auto& t : tasks)
        if ((t.family == Family::LAB_CHAIN) != lab)
            throw ConfigError("run directory holds tasks of another benchmark");
    return tasks;
}

AgentParams load_checkpoint(Run& run, const std::string& file) {
    AgentParams p = params_from_json(run.input(file));
    if (p.K_max != run.cfg().K_max)
        throw ConfigError(file + " was trained with K_max=" + std::to_string(p.K_max) + " but the configuration asks for " +
                          std::to_string(run.cfg().K_max));
    return p;
}

std::shared_ptr<const WorldModelParams> load_wm(Run& run) {
    return std::make_shared<const WorldModelParams>(world_model_from_json(run.input("wm.json")));
}

NoisyWorldModel noisy_wm(const RunConfig& cfg, std::shared_ptr<const WorldModelParams> wm, double epsilon) {
    return NoisyWorldModel{std::move(wm), epsilon, derive_seed(cfg.seed, "noise")};
}

// First n_eval_episodes tasks of the pool, cycling when the pool is shorter.
std::vector<TaskSpec> eval_tasks(const RunConfig& cfg, const std::vector<TaskSpec>& pool) {
    if (pool.empty()) throw EmptyDataset("task pool is empty");
    std::vector<TaskSpec> out;
    for (int i = 0; i < cfg.n_eval_episodes; ++i) out.push_back(pool[static_cast<std::size_t>(i) % pool.size()]);
    return out;
}

std::string newest_checkpoint(const Run& run) {
    if (run.has("rl.json")) return "rl.json";
    if (run.has("warmup.json")) return "warmup.json";
    throw StaleArtifact("no trained checkpoint; run warmup or rl first");
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

json result_summary(std::span<const EpisodeResult> results, double t0, double tk) {
    const auto sr = success_rate(results);
    json j;
    j["sr"] = sr.overall;
    j["mean_budget"] = mean_budget(results);
    j["nb"] = normalized_budget_value(mean_budget(results), t0, tk);
    j["mean_k"] = mean_k(results);
    j["n"] = sr.n;
    json fam = json::object();
    for (const auto& [f, v] : sr.per_family)
        fam[std::string(family_name(f))] = {{"sr", v}, {"n", sr.per_family_n.at(f)}};
    j["per_family"] = fam;
    return j;
}

}  // namespace

std::string cmd_gen_data(const RunConfig& cfg) {
    validate_config(cfg);
    Run run(cfg);
    run.fresh();
    const auto pool = make_task_pool(cfg);
    const auto episodes = make_expert_episodes(pool);
    const AgentParams pi0 = behavior_clone(episodes, cfg.train);
    const auto rollouts = collect_rollouts(pi0, pool, cfg.n_rollout_episodes, derive_seed(cfg.seed, "roll"));

    std::string tasks;
    for (const auto& t : pool) tasks += task_to_json(t) + "\n";
    std::size_t expert_steps = 0;
    for (const auto& e : episodes) expert_steps += e.plan.size();

    run.output("config.txt", config_to_text(cfg));
    run.output("tasks.jsonl", tasks);
    run.output("expert.jsonl", expert_episodes_to_jsonl(episodes));
    run.output("pi0.json", params_to_json(pi0, config_hash(cfg)));
    run.output("rollouts.jsonl", transitions_to_jsonl(rollouts, "rollout"));
    run.commit("gen-data");
    return "gen-data: " + std::to_string(pool.size()) + " tasks, " + std::to_string(expert_steps) +
           " expert steps, " + std::to_string(rollouts.size()) + " rollout transitions";
}

std::string cmd_train_wm(const RunConfig& cfg) {
    validate_config(cfg);
    Run run(cfg);
    run.require_same_config();
    auto data = expert_transitions_from_jsonl(run.input("expert.jsonl"));
    const std::size_t n_expert = data.size();
    const auto roll = transitions_from_jsonl(run.input("rollouts.jsonl"));
    data.insert(data.end(), roll.begin(), roll.end());
    const auto wm = fit_world_model(data);

    json metrics;
    metrics["expert_records"] = n_expert;
    metrics["rollout_records"] = roll.size();
    metrics["table_entries"] = wm.table.size();
    metrics["observed_states"] = wm.observed_states.size();
    metrics["nll"] = total_nll(wm, data);
    run.output("wm.json", world_model_to_json(wm));
    run.output("wm_metrics.json", metrics.dump(2) + "\n");
    run.commit("train-wm");
    return "train-wm: " + std::to_string(data.size()) + " records, " + std::to_string(wm.table.size()) +
           " (state, action) entries";
}

std::string cmd_label_k(const RunConfig& cfg) {
    validate_config(cfg);
    Run run(cfg);
    run.require_same_config();
    load_tasks(run);
    const auto episodes = expert_episodes_from_jsonl(run.input("expert.jsonl"), task_options(cfg));
    const AgentParams pi0 = load_checkpoint(run, "pi0.json");
    // Labels come from the noise-free model so they reflect what foresight can offer.
    const auto wm = noisy_wm(cfg, load_wm(run), 0.0);
    const auto labels = pseudo_label_dataset(episodes, wm, pi0, cfg.train, derive_seed(cfg.seed, "label"));

    std::vector<int> hist(static_cast<std::size_t>(cfg.K_max) + 1, 0);
    for (const auto& l : labels) ++hist[static_cast<std::size_t>(l.k_label)];
    json metrics;
    metrics["steps"] = labels.size();
    metrics["k_label_histogram"] = hist;
    run.output("klabels.jsonl", labels_to_jsonl(labels, episodes));
    run.output("label_metrics.json", metrics.dump(2) + "\n");
    run.commit("label-k");
    std::string h;
    for (int c : hist) h += " " + std::to_string(c);
    return "label-k: " + std::to_string(labels.size()) + " steps, k histogram" + h;
}

std::string cmd_warmup(const RunConfig& cfg) {
    validate_config(cfg);
    Run run(cfg);
    run.require_same_config();
    const auto episodes = expert_episodes_from_jsonl(run.input("expert.jsonl"), task_options(cfg));
    const AgentParams pi0 = load_checkpoint(run, "pi0.json");
    const auto labels = labels_from_jsonl(run.input("klabels.jsonl"), episodes);
    std::vector<WarmupLoss> curve;
    const AgentParams warm = warmup_train(pi0, labels, episodes, cfg.train, &curve);

    std::string csv = "epoch,loss_policy,loss_k,loss_total\n";
    char buf[128];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", i, curve[i].policy, curve[i].k_head, curve[i].total);
        csv += buf;
    }
    run.output("warmup.json", params_to_json(warm, config_hash(cfg)));
    run.output("warmup_curve.csv", csv);
    run.commit("warmup");
    return curve.empty() ? "warmup: no epochs"
                         : "warmup: loss " + fmt("%.4f", curve.front().total) + " -> " + fmt("%.4f", curve.back().total);
}

std::string cmd_rl(const RunConfig& cfg) {
    validate_config(cfg);
    Run run(cfg);
    run.require_same_config();
    const auto tasks = load_tasks(run);
    const AgentParams warm = load_checkpoint(run, "warmup.json");
    const auto wm = noisy_wm(cfg, load_wm(run), cfg.wm_epsilon);
    const auto result = online_train(warm, tasks, wm, cfg.train, cfg.n_rl_episodes, derive_seed(cfg.seed, "rl"));
    run.output("rl.json", params_to_json(result.params, config_hash(cfg)));
    run.output("rl_curve.csv", curve_to_csv(result.curve));
    run.commit("rl");

    if (result.curve.empty()) return "rl: 0 episodes, checkpoint equals warm-up";
    const std::size_t tail = std::max<std::size_t>(1, result.curve.size() / 10);
    double ret = 0.0, k = 0.0;
    for (std::size_t i = result.curve.size() - tail; i < result.curve.size(); ++i) {
        ret += result.curve[i].env_return;
        k += result.curve[i].mean_k;
    }
    return "rl: " + std::to_string(result.curve.size()) + " episodes, last-10% success " +
           fmt("%.3f", ret / static_cast<double>(tail)) + ", mean k " + fmt("%.2f", k / static_cast<double>(tail));
}

std::string cmd_eval(const RunConfig& cfg) {
    validate_config(cfg);
    const LookaheadController controller = parse_controller(cfg.controller);
    Run run(cfg);
    const auto pool = load_tasks(run);
    const std::string ckpt = newest_checkpoint(run);
    const AgentParams params = load_checkpoint(run, ckpt);
    const auto wm = noisy_wm(cfg, load_wm(run), cfg.wm_epsilon);
    const auto seeds = eval_seeds(cfg);

    auto evaluate = [&](const std::vector<TaskSpec>& tasks) {
        const double t0 = mean_budget(evaluate_grid(tasks, params, wm, LookaheadController::fixed(0), seeds));
        const double tk = mean_budget(evaluate_grid(tasks, params, wm, LookaheadController::fixed(cfg.K_max), seeds));
        return result_summary(evaluate_grid(tasks, params, wm, controller, seeds), t0, tk);
    };

    json j;
    j["controller"] = controller_name(controller);
    j["checkpoint"] = ckpt;
    j["epsilon"] = cfg.wm_epsilon;
    j["seeds"] = seeds.size();
    j["train_tasks"] = evaluate(eval_tasks(cfg, pool));
    if (cfg.benchmark == Benchmark::lab) j["heldout_tasks"] = evaluate(make_heldout_pool(cfg));

    std::string name = controller_name(controller);
    std::replace(name.begin(), name.end(), ':', '_');
    run.output("eval_" + name + ".json", j.dump(2) + "\n");
    run.commit("eval");
    return "eval " + controller_name(controller) + " on " + ckpt + ": sr " +
           fmt("%.3f", j["train_tasks"]["sr"].get<double>()) + ", nb " +
           fmt("%.3f", j["train_tasks"]["nb"].get<double>());
}

std::string cmd_sweep(const RunConfig& cfg) {
    validate_config(cfg);
    Run run(cfg);
    const auto pool = load_tasks(run);
    const std::string ckpt = newest_checkpoint(run);
    const AgentParams params = load_checkpoint(run, ckpt);
    const auto wm = noisy_wm(cfg, load_wm(run), cfg.wm_epsilon);
    const auto rep = sweep_fixed_k(params, wm, eval_tasks(cfg, pool), eval_seeds(cfg));

    run.output("sweep.csv", sweep_to_csv(rep));
    run.output("sweep.json", sweep_to_json(rep));
    const fs::path tmp = fs::path(cfg.output_dir) / ".plot";
    fs::create_directories(tmp);
    write_plot_data(rep, tmp.string());
    for (const char* f : {"sr_vs_k.dat", "nb_vs_k.dat", "sr_vs_nb.dat"}) run.output(f, read_file((tmp / f).string()));
    fs::remove_all(tmp);
    run.commit("sweep");

    std::string out = "sweep on " + ckpt + ":";
    for (std::size_t k = 0; k < rep.per_k.size(); ++k) out += " k" + std::to_string(k) + "=" + fmt("%.3f", rep.per_k[k].sr);
    out += " adaptive=" + fmt("%.3f", rep.adaptive.sr) + " (nb " + fmt("%.3f", rep.adaptive.nb) + ")";
    out += " random=" + fmt("%.3f", rep.random.sr) + " (nb " + fmt("%.3f", rep.random.nb) + ")";
    return out;
}

namespace {

struct ReportRow {
    std::string name;
    std::vector<double> cells;  // fractions
    double nb = 0.0;
};

std::string render_table(const std::vector<std::string>& columns, const std::vector<ReportRow>& rows) {
    std::size_t w0 = 6;
    for (const auto& r : rows) w0 = std::max(w0, r.name.size());
    std::string out;
    char buf[64];
    auto cell = [&](const std::string& s) {
        std::snprintf(buf, sizeof buf, " %8s", s.c_str());
        out += buf;
    };
    out += "Method" + std::string(w0 - 6, ' ');
    for (const auto& c : columns) cell(c);
    cell("NB");
    out += "\n";
    for (const auto& r : rows) {
        out += r.name + std::string(w0 - r.name.size(), ' ');
        for (double v : r.cells) cell(fmt("%.2f", 100.0 * v));
        cell(fmt("%.3f", r.nb));
        out += "\n";
    }
    return out;
}

}  // namespace

std::string cmd_report(const RunConfig& cfg) {
    validate_config(cfg);
    Run run(cfg);
    const auto pool = load_tasks(run);
    const AgentParams warm = load_checkpoint(run, "warmup.json");
    if (!run.has("rl.json")) throw StaleArtifact("rl.json is not recorded in the manifest; run rl first");
    const AgentParams rl = load_checkpoint(run, "rl.json");
    const auto wm = noisy_wm(cfg, load_wm(run), cfg.wm_epsilon);
    const auto seeds = eval_seeds(cfg);
    const bool lab = cfg.benchmark == Benchmark::lab;
    const auto tasks = eval_tasks(cfg, pool);
    const auto heldout = lab ? make_heldout_pool(cfg) : std::vector<TaskSpec>{};

    const auto rep = sweep_fixed_k(rl, wm, tasks, seeds);
    std::size_t best = 0;
    for (std::size_t k = 1; k < rep.per_k.size(); ++k)
        if (rep.per_k[k].sr > rep.per_k[best].sr) best = k;
    const double t0 = rep.per_k.front().mean_budget, tk = rep.per_k.back().mean_budget;

    std::vector<std::string> columns;
    if (lab) {
        columns = {"Seen", "Unseen"};
    } else {
        for (Family f : kHouseFamilies) columns.emplace_back(family_name(f));
        columns.emplace_back("Overall");
    }

    auto row = [&](const std::string& name, const AgentParams& p, const LookaheadController& c,
                   const std::vector<EpisodeResult>* precomputed) {
        const auto results = precomputed ? *precomputed : evaluate_grid(tasks, p, wm, c, seeds);
        const auto sr = success_rate(results);
        ReportRow r{name, {}, normalized_budget_value(mean_budget(results), t0, tk)};
        if (lab) {
            r.cells = {sr.overall, success_rate(evaluate_grid(heldout, p, wm, c, seeds)).overall};
        } else {
            for (Family f : kHouseFamilies) r.cells.push_back(sr.per_family.count(f) ? sr.per_family.at(f) : 0.0);
            r.cells.push_back(sr.overall);
        }
        return r;
    };

    std::vector<ReportRow> rows;
    rows.push_back(row("Reactive (k=0)", rl, LookaheadController::fixed(0), &rep.fixed_results.front()));
    rows.push_back(row("Fixed k=" + std::to_string(best), rl, LookaheadController::fixed(static_cast<int>(best)),
                       &rep.fixed_results[best]));
    rows.push_back(row("Random k", rl, LookaheadController::random(), &rep.random_results));
    rows.push_back(row("Heuristic", rl, LookaheadController::heuristic(), nullptr));
    rows.push_back(row("Adaptive w/o RT", warm, LookaheadController::learned(), nullptr));
    rows.push_back(row("Adaptive", rl, LookaheadController::learned(), &rep.adaptive_results));

    const auto abl = ablation_no_rt(warm, rl, wm, tasks, seeds, derive_seed(cfg.seed, "bootstrap"),
                                    cfg.bootstrap_resamples);
    std::string out = "Success rate (%) on the " + std::string(benchmark_name(cfg.benchmark)) + " benchmark, " +
                      std::to_string(tasks.size()) + " tasks x " + std::to_string(seeds.size()) +
                      " seeds, world-model epsilon " + fmt("%.2f", cfg.wm_epsilon) + "\n\n";
    out += render_table(columns, rows);
    out += "\nAblation w/o RT: " + fmt("%+.2f", 100.0 * abl.diff.mean_diff) + " SR points, 95% CI [" +
           fmt("%+.2f", 100.0 * abl.diff.lo) + ", " + fmt("%+.2f", 100.0 * abl.diff.hi) + "]\n";
    run.output("report.txt", out);
    run.commit("report");
    return out;
}

std::string run_command(const std::string& name, const RunConfig& cfg) {
    if (name == "gen-data") return cmd_gen_data(cfg);
    if (name == "train-wm") return cmd_train_wm(cfg);
    if (name == "label-k") return cmd_label_k(cfg);
    if (name == "warmup") return cmd_warmup(cfg);
    if (name == "rl") return cmd_rl(cfg);
    if (name == "eval") return cmd_eval(cfg);
    if (name == "sweep") return cmd_sweep(cfg);
    if (name == "report") return cmd_report(cfg);
    throw ConfigError("unknown command: " + name);
}

bool is_deterministic_output(const std::string& file_name) { return file_name != "run_log.jsonl"; }

}  // namespace itp
