#pragma once

// Run configuration, dataset files and the artifact manifest.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "itp/controller.hpp"
#include "itp/env.hpp"
#include "itp/training.hpp"
#include "itp/world_model.hpp"

namespace itp {

enum class Benchmark : std::uint8_t { house, lab };
std::string_view benchmark_name(Benchmark b);
int default_k_max(Benchmark b);

struct RunConfig {
    Benchmark benchmark = Benchmark::house;
    int K_max = 5;
    TrainConfig train{};
    double wm_epsilon = 0.15;
    int n_expert_tasks = 200;
    int n_rollout_episodes = 2000;
    int n_rl_episodes = 10000;
    int n_eval_episodes = 200;  // tasks per evaluation seed
    int n_eval_seeds = 3;
    int bootstrap_resamples = 10000;
    int lab_chain_len = 5;
    std::uint64_t seed = 7;
    std::string output_dir = "run";
    std::string controller = "learned";
};

// Defaults for a benchmark, K_max included.
RunConfig default_config(Benchmark b);

// key=value lines; '#' starts a comment. Unknown keys and malformed values
// throw ConfigError.
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
// Canonical key=value rendering of every field that influences artifacts.
// output_dir and controller are excluded.
std::string config_to_text(const RunConfig& cfg);
// Hash of the keys that shape trained artifacts. Run lengths and evaluation
// sizes are left out, so extending a run keeps checkpoints comparable.
std::string config_hash(const RunConfig& cfg);
// Defaults for the resolved benchmark, then the file, then overrides in order.
RunConfig resolve_config(const std::string& file_text,
                         const std::vector<std::pair<std::string, std::string>>& overrides);
// Throws ConfigError when counts are non-positive or values are out of range.
void validate_config(const RunConfig& cfg);

// Task pool of a run: household families round-robin, or lab chains.
std::vector<TaskSpec> make_task_pool(const RunConfig& cfg);
// Lab tasks drawn from a seed range disjoint from the training pool.
std::vector<TaskSpec> make_heldout_pool(const RunConfig& cfg);
std::vector<std::uint64_t> eval_seeds(const RunConfig& cfg);

// {family, instance_seed, goal, max_steps}
std::string task_to_json(const TaskSpec& task);
// Regenerates the task from family and seed and checks the stored goal and step limit.
TaskSpec task_from_json(const std::string& line, const TaskOptions& options = {});

// One line per expert step.
std::string expert_episodes_to_jsonl(const std::vector<ExpertEpisode>& episodes);
std::vector<ExpertEpisode> expert_episodes_from_jsonl(const std::string& text, const TaskOptions& options = {});
// Transition view of the expert file, in file order.
std::vector<TransitionRecord> expert_transitions_from_jsonl(const std::string& text);

std::string transitions_to_jsonl(const std::vector<TransitionRecord>& records, const std::string& source);
std::vector<TransitionRecord> transitions_from_jsonl(const std::string& text);

std::string labels_to_jsonl(const std::vector<PseudoLabeledStep>& labels, const std::vector<ExpertEpisode>& episodes);
std::vector<PseudoLabeledStep> labels_from_jsonl(const std::string& text, const std::vector<ExpertEpisode>& episodes);

std::string curve_to_csv(const std::vector<CurveRow>& curve);

std::string read_file(const std::string& path);
// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);
// 64-bit FNV-1a of the bytes, as 16 hex digits.
std::string checksum(const std::string& bytes);

struct StageRecord {
    std::string config_hash;
    std::map<std::string, std::string> inputs;   // file name -> checksum
    std::map<std::string, std::string> outputs;  // file name -> checksum
};

struct RunManifest {
    std::string config_hash;
    std::string tool_version;
    std::map<std::string, StageRecord> stages;
    // Wall-clock stamps per stage. Kept out of manifest.json so reruns stay
    // byte-identical; written to run_log.jsonl instead.
    std::map<std::string, std::string> timestamps;
};

inline constexpr const char* kToolVersion = "itp 1.0.0";

RunManifest load_manifest(const std::string& dir);
void save_manifest(const std::string& dir, const RunManifest& manifest);

// Throws StaleArtifact unless `file` in `dir` exists, was produced by some
// recorded stage and still has the recorded checksum. Returns the content.
std::string read_artifact(const std::string& dir, const RunManifest& manifest, const std::string& file);

}  // namespace itp
