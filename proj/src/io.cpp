#include "itp/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "itp/errors.hpp"
#include "itp/rng.hpp"

namespace itp {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw ConfigError("bad value for " + key + ": '" + v + "'");
    return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError("bad value for " + key + ": '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad value for " + key + ": '" + v + "'");
}

struct Field {
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

Field real(const char* key, double RunConfig::*m) {
    return {key, [m](const RunConfig& c) { return format_double(c.*m); },
            [m, key](RunConfig& c, const std::string& v) { c.*m = parse_double(key, v); }};
}
Field real(const char* key, double TrainConfig::*m) {
    return {key, [m](const RunConfig& c) { return format_double(c.train.*m); },
            [m, key](RunConfig& c, const std::string& v) { c.train.*m = parse_double(key, v); }};
}
Field real(const char* key, double ForesightPrior::*m) {
    return {key, [m](const RunConfig& c) { return format_double(c.train.prior.*m); },
            [m, key](RunConfig& c, const std::string& v) { c.train.prior.*m = parse_double(key, v); }};
}
Field integer(const char* key, int RunConfig::*m) {
    return {key, [m](const RunConfig& c) { return std::to_string(c.*m); },
            [m, key](RunConfig& c, const std::string& v) { c.*m = parse_int<int>(key, v); }};
}
Field integer(const char* key, int TrainConfig::*m) {
    return {key, [m](const RunConfig& c) { return std::to_string(c.train.*m); },
            [m, key](RunConfig& c, const std::string& v) { c.train.*m = parse_int<int>(key, v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"benchmark", [](const RunConfig& c) { return std::string(benchmark_name(c.benchmark)); },
         [](RunConfig& c, const std::string& v) {
             if (v == "house")
                 c.benchmark = Benchmark::house;
             else if (v == "lab")
                 c.benchmark = Benchmark::lab;
             else
                 throw ConfigError("unknown benchmark: " + v);
         }},
        {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); }},
        {"k_max", [](const RunConfig& c) { return std::to_string(c.K_max); },
         [](RunConfig& c, const std::string& v) { c.K_max = c.train.K_max = parse_int<int>("k_max", v); }},
        real("epsilon", &RunConfig::wm_epsilon),
        integer("n_expert_tasks", &RunConfig::n_expert_tasks),
        integer("n_rollout_episodes", &RunConfig::n_rollout_episodes),
        integer("n_rl_episodes", &RunConfig::n_rl_episodes),
        integer("n_eval_episodes", &RunConfig::n_eval_episodes),
        integer("n_eval_seeds", &RunConfig::n_eval_seeds),
        integer("bootstrap_resamples", &RunConfig::bootstrap_resamples),
        integer("lab_chain_len", &RunConfig::lab_chain_len),
        real("lambda_k", &TrainConfig::lambda_k),
        real("lambda_step", &TrainConfig::lambda_step),
        real("success_bonus", &TrainConfig::success_bonus),
        real("invalid_penalty", &TrainConfig::invalid_penalty),
        real("gamma", &TrainConfig::gamma),
        real("eta", &TrainConfig::eta),
        real("alpha", &TrainConfig::alpha),
        real("beta", &TrainConfig::beta),
        real("max_grad_norm", &TrainConfig::max_grad_norm),
        real("learning_rate_bc", &TrainConfig::learning_rate_bc),
        real("learning_rate_warmup", &TrainConfig::learning_rate_warmup),
        real("learning_rate_rl", &TrainConfig::learning_rate_rl),
        integer("epochs_bc", &TrainConfig::epochs_bc),
        integer("epochs", &TrainConfig::epochs),
        integer("critic_warmup_episodes", &TrainConfig::critic_warmup_episodes),
        integer("td_steps", &TrainConfig::td_steps),
        {"per_step_updates", [](const RunConfig& c) { return std::string(c.train.per_step_updates ? "true" : "false"); },
         [](RunConfig& c, const std::string& v) { c.train.per_step_updates = parse_bool("per_step_updates", v); }},
        {"rl_optimizer", [](const RunConfig& c) { return std::string(c.train.rl_optimizer == Optimizer::adam ? "adam" : "sgd"); },
         [](RunConfig& c, const std::string& v) {
             if (v == "adam")
                 c.train.rl_optimizer = Optimizer::adam;
             else if (v == "sgd")
                 c.train.rl_optimizer = Optimizer::sgd;
             else
                 throw ConfigError("unknown optimizer: " + v);
         }},
        real("adam_beta1", &TrainConfig::adam_beta1),
        real("adam_beta2", &TrainConfig::adam_beta2),
        real("adam_epsilon", &TrainConfig::adam_epsilon),
        real("temperature", &TrainConfig::temperature),
        real("prior_agrees", &ForesightPrior::agrees),
        real("prior_reaches_goal", &ForesightPrior::reaches_goal),
        real("prior_conflict", &ForesightPrior::conflict),
        real("prior_progress_delta", &ForesightPrior::progress_delta),
    };
    return table;
}

}  // namespace

std::string_view benchmark_name(Benchmark b) { return b == Benchmark::house ? "house" : "lab"; }

int default_k_max(Benchmark b) { return b == Benchmark::house ? 5 : 8; }

RunConfig default_config(Benchmark b) {
    RunConfig c;
    c.benchmark = b;
    c.K_max = c.train.K_max = default_k_max(b);
    return c;
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "out" || key == "output_dir") {
        cfg.output_dir = value;
        return;
    }
    if (key == "controller") {
        parse_controller(value);
        cfg.controller = value;
        return;
    }
    for (const auto& f : fields()) {
        if (key == f.key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key: " + key);
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        apply_config_value(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    }
}

std::string config_to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(cfg) + "\n";
    return out;
}

std::string config_hash(const RunConfig& cfg) {
    static const std::set<std::string> run_length = {"n_rollout_episodes", "n_rl_episodes", "n_eval_episodes",
                                                     "n_eval_seeds", "bootstrap_resamples"};
    std::string text;
    for (const auto& f : fields())
        if (!run_length.count(f.key)) text += std::string(f.key) + "=" + f.get(cfg) + "\n";
    return checksum(text);
}

RunConfig resolve_config(const std::string& file_text, const std::vector<std::pair<std::string, std::string>>& overrides) {
    // The benchmark picks the defaults, so it is resolved first with the same precedence.
    RunConfig probe = default_config(Benchmark::house);
    apply_config_text(probe, file_text);
    for (const auto& [k, v] : overrides)
        if (k == "benchmark") apply_config_value(probe, k, v);
    RunConfig cfg = default_config(probe.benchmark);
    apply_config_text(cfg, file_text);
    for (const auto& [k, v] : overrides) apply_config_value(cfg, k, v);
    return cfg;
}

void validate_config(const RunConfig& cfg) {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(cfg.n_expert_tasks, "n_expert_tasks");
    positive(cfg.n_rollout_episodes, "n_rollout_episodes");
    positive(cfg.n_eval_episodes, "n_eval_episodes");
    positive(cfg.n_eval_seeds, "n_eval_seeds");
    positive(cfg.bootstrap_resamples, "bootstrap_resamples");
    positive(cfg.lab_chain_len, "lab_chain_len");
    positive(cfg.train.td_steps, "td_steps");
    if (cfg.n_rl_episodes < 0) throw ConfigError("n_rl_episodes must be non-negative");
    if (cfg.K_max < 1) throw ConfigError("k_max must be at least 1");
    if (cfg.train.K_max != cfg.K_max) throw ConfigError("train K_max differs from run K_max");
    if (!(cfg.wm_epsilon >= 0.0 && cfg.wm_epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    if (!(cfg.train.gamma > 0.0 && cfg.train.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (cfg.train.lambda_k < 0.0) throw ConfigError("lambda_k must be non-negative");
    if (cfg.train.beta < 0.0) throw ConfigError("beta must be non-negative");
    if (!(cfg.train.temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(cfg.train.max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
}

std::vector<TaskSpec> make_task_pool(const RunConfig& cfg) {
    std::vector<TaskSpec> out;
    out.reserve(static_cast<std::size_t>(cfg.n_expert_tasks));
    for (int i = 0; i < cfg.n_expert_tasks; ++i) {
        const auto seed = derive_seed(cfg.seed, "task", static_cast<std::uint64_t>(i));
        if (cfg.benchmark == Benchmark::house)
            out.push_back(sample_task(kHouseFamilies[static_cast<std::size_t>(i) % kHouseFamilies.size()], seed));
        else
            out.push_back(sample_task(Family::LAB_CHAIN, seed, TaskOptions{cfg.lab_chain_len}));
    }
    return out;
}

std::vector<TaskSpec> make_heldout_pool(const RunConfig& cfg) {
    std::vector<TaskSpec> out;
    for (int i = 0; i < cfg.n_eval_episodes; ++i) {
        const auto seed = derive_seed(cfg.seed, "heldout-task", static_cast<std::uint64_t>(i));
        out.push_back(sample_task(Family::LAB_CHAIN, seed, TaskOptions{cfg.lab_chain_len}));
    }
    return out;
}

std::vector<std::uint64_t> eval_seeds(const RunConfig& cfg) {
    std::vector<std::uint64_t> out;
    for (int j = 0; j < cfg.n_eval_seeds; ++j) out.push_back(derive_seed(cfg.seed, "eval-seed", static_cast<std::uint64_t>(j)));
    return out;
}

std::string task_to_json(const TaskSpec& task) {
    json j;
    j["family"] = family_name(task.family);
    j["instance_seed"] = task.instance_seed;
    j["goal"] = goal_string(task);
    j["max_steps"] = task.max_steps;
    return j.dump();
}

TaskSpec task_from_json(const std::string& line, const TaskOptions& options) {
    const auto j = json::parse(line);
    TaskSpec t = sample_task(parse_family(j.at("family").get<std::string>()), j.at("instance_seed").get<std::uint64_t>(),
                             options);
    if (goal_string(t) != j.at("goal").get<std::string>() || t.max_steps != j.at("max_steps").get<int>())
        throw StaleArtifact("task record does not match its regenerated instance");
    return t;
}

std::string expert_episodes_to_jsonl(const std::vector<ExpertEpisode>& episodes) {
    std::string out;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const auto& ep = episodes[e];
        const auto records = expert_transitions(ep.task, ep.plan);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            json j;
            j["episode"] = e;
            j["step"] = i;
            j["family"] = family_name(ep.task.family);
            j["instance_seed"] = ep.task.instance_seed;
            j["state"] = r.state;
            j["action"] = r.action;
            j["next_state"] = r.next_state;
            j["reward"] = r.reward;
            j["done"] = r.done;
            out += j.dump() + "\n";
        }
    }
    return out;
}

std::vector<ExpertEpisode> expert_episodes_from_jsonl(const std::string& text, const TaskOptions& options) {
    std::vector<ExpertEpisode> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        const auto e = j.at("episode").get<std::size_t>();
        if (e == out.size()) {
            ExpertEpisode ep;
            ep.task = sample_task(parse_family(j.at("family").get<std::string>()),
                                  j.at("instance_seed").get<std::uint64_t>(), options);
            out.push_back(std::move(ep));
        } else if (e + 1 != out.size()) {
            throw StaleArtifact("expert file episodes are not contiguous");
        }
        auto& ep = out.back();
        if (j.at("step").get<std::size_t>() != ep.plan.size()) throw StaleArtifact("expert file steps are not contiguous");
        ep.plan.push_back(parse_action(j.at("action").get<std::string>(), ep.task));
    }
    for (const auto& ep : out) {
        const auto records = expert_transitions(ep.task, ep.plan);
        if (records.empty() || !records.back().done) throw StaleArtifact("expert plan no longer reaches the goal");
    }
    return out;
}

std::vector<TransitionRecord> expert_transitions_from_jsonl(const std::string& text) {
    std::vector<TransitionRecord> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        out.push_back({j.at("state").get<std::string>(), j.at("action").get<std::string>(),
                       j.at("next_state").get<std::string>(), j.at("reward").get<double>(), j.at("done").get<bool>()});
    }
    return out;
}

std::string transitions_to_jsonl(const std::vector<TransitionRecord>& records, const std::string& source) {
    std::string out;
    for (const auto& r : records) {
        json j;
        j["source"] = source;
        j["state"] = r.state;
        j["action"] = r.action;
        j["next_state"] = r.next_state;
        j["reward"] = r.reward;
        j["done"] = r.done;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<TransitionRecord> transitions_from_jsonl(const std::string& text) {
    std::vector<TransitionRecord> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        out.push_back({j.at("state").get<std::string>(), j.at("action").get<std::string>(),
                       j.at("next_state").get<std::string>(), j.at("reward").get<double>(), j.at("done").get<bool>()});
    }
    return out;
}

std::string labels_to_jsonl(const std::vector<PseudoLabeledStep>& labels, const std::vector<ExpertEpisode>& episodes) {
    std::string out;
    for (const auto& l : labels) {
        json j;
        j["state"] = l.state;
        j["expert_action"] = l.expert_action;
        j["k_candidates"] = l.k_candidates;
        j["scores"] = l.scores;
        j["penalized_scores"] = l.penalized_scores;
        j["k_label"] = l.k_label;
        j["lookahead_summary"] = l.lookahead_summaries;
        j["episode"] = l.episode;
        j["step"] = l.step;
        if (l.label_summary) {
            const auto& s = *l.label_summary;
            const auto& task = episodes.at(l.episode).task;
            json r;
            r["reaches_goal"] = s.reaches_goal;
            r["steps_to_goal"] = s.steps_to_goal ? json(*s.steps_to_goal) : json(nullptr);
            r["conflict_flag"] = s.conflict_flag;
            r["progress_delta"] = s.progress_delta;
            r["first_imagined_action"] =
                s.first_imagined_action ? json(action_string(*s.first_imagined_action, task)) : json(nullptr);
            j["label_summary"] = r;
        } else {
            j["label_summary"] = nullptr;
        }
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<PseudoLabeledStep> labels_from_jsonl(const std::string& text, const std::vector<ExpertEpisode>& episodes) {
    std::vector<PseudoLabeledStep> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        PseudoLabeledStep l;
        l.state = j.at("state").get<std::string>();
        l.expert_action = j.at("expert_action").get<std::string>();
        l.k_candidates = j.at("k_candidates").get<std::vector<int>>();
        l.scores = j.at("scores").get<std::vector<double>>();
        l.penalized_scores = j.at("penalized_scores").get<std::vector<double>>();
        l.k_label = j.at("k_label").get<int>();
        l.lookahead_summaries = j.at("lookahead_summary").get<std::vector<std::string>>();
        l.episode = j.at("episode").get<std::size_t>();
        l.step = j.at("step").get<int>();
        if (l.episode >= episodes.size()) throw StaleArtifact("k-label record refers to a missing expert episode");
        const auto& r = j.at("label_summary");
        if (!r.is_null()) {
            ReflectionSummary s;
            s.reaches_goal = r.at("reaches_goal").get<bool>();
            if (!r.at("steps_to_goal").is_null()) s.steps_to_goal = r.at("steps_to_goal").get<int>();
            s.conflict_flag = r.at("conflict_flag").get<bool>();
            s.progress_delta = r.at("progress_delta").get<double>();
            if (!r.at("first_imagined_action").is_null())
                s.first_imagined_action =
                    parse_action(r.at("first_imagined_action").get<std::string>(), episodes[l.episode].task);
            l.label_summary = s;
        }
        if (l.scores.size() != l.k_candidates.size() || l.penalized_scores.size() != l.k_candidates.size())
            throw StaleArtifact("k-label record has mismatched score lengths");
        out.push_back(std::move(l));
    }
    return out;
}

std::string curve_to_csv(const std::vector<CurveRow>& curve) {
    std::string out = "episode,shaped_return,env_return,mean_k,entropy_k,loss_act,loss_value,loss_ent,loss_total,grad_norm\n";
    char buf[512];
    for (const auto& r : curve) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.episode, r.shaped_return,
                      r.env_return, r.mean_k, r.entropy_k, r.loss.act, r.loss.value, r.loss.ent, r.loss.total,
                      r.loss.grad_norm);
        out += buf;
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + path);
        out << content;
        if (!out) throw Error("short write to " + path);
    }
    std::filesystem::rename(tmp, path);
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

std::string checksum(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunManifest load_manifest(const std::string& dir) {
    RunManifest m;
    m.tool_version = kToolVersion;
    const std::string path = (std::filesystem::path(dir) / "manifest.json").string();
    if (!file_exists(path)) return m;
    const auto j = json::parse(read_file(path));
    m.config_hash = j.value("config_hash", "");
    m.tool_version = j.value("tool_version", kToolVersion);
    for (const auto& [name, st] : j.at("stages").items()) {
        StageRecord r;
        r.config_hash = st.value("config_hash", "");
        r.inputs = st.at("inputs").get<std::map<std::string, std::string>>();
        r.outputs = st.at("outputs").get<std::map<std::string, std::string>>();
        m.stages[name] = std::move(r);
    }
    return m;
}

void save_manifest(const std::string& dir, const RunManifest& m) {
    json j;
    j["config_hash"] = m.config_hash;
    j["tool_version"] = m.tool_version;
    json stages = json::object();
    for (const auto& [name, r] : m.stages) {
        stages[name] = {{"config_hash", r.config_hash}, {"inputs", r.inputs}, {"outputs", r.outputs}};
    }
    j["stages"] = stages;
    write_file((std::filesystem::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
    if (!m.timestamps.empty()) {
        std::string log;
        for (const auto& [stage, when] : m.timestamps) log += json{{"stage", stage}, {"finished", when}}.dump() + "\n";
        std::ofstream out((std::filesystem::path(dir) / "run_log.jsonl").string(), std::ios::app);
        out << log;
    }
}

std::string read_artifact(const std::string& dir, const RunManifest& manifest, const std::string& file) {
    const std::string path = (std::filesystem::path(dir) / file).string();
    if (!file_exists(path)) throw StaleArtifact(file + " is missing; run the stage that produces it first");
    const std::string* recorded = nullptr;
    for (const auto& [_, r] : manifest.stages) {
        const auto it = r.outputs.find(file);
        if (it != r.outputs.end()) recorded = &it->second;
    }
    if (!recorded) throw StaleArtifact(file + " is not recorded in the manifest");
    std::string content = read_file(path);
    if (checksum(content) != *recorded) throw StaleArtifact(file + " changed since it was produced");
    return content;
}

}  // namespace itp
