#pragma once

// Pipeline stages behind the command-line tool. Each stage reads its inputs
// from cfg.output_dir through the manifest, writes its outputs there and
// returns a short human-readable summary.

#include <string>
#include <vector>

#include "itp/io.hpp"

namespace itp {

// Training stages in dependency order. Running one drops the manifest
// records of every later training stage.
inline const std::vector<std::string> kTrainingStages = {"gen-data", "train-wm", "label-k", "warmup", "rl"};

std::string cmd_gen_data(const RunConfig& cfg);
std::string cmd_train_wm(const RunConfig& cfg);
std::string cmd_label_k(const RunConfig& cfg);
std::string cmd_warmup(const RunConfig& cfg);
std::string cmd_rl(const RunConfig& cfg);
// Evaluates cfg.controller with the newest checkpoint (rl.json, else warmup.json).
std::string cmd_eval(const RunConfig& cfg);
std::string cmd_sweep(const RunConfig& cfg);
// Needs both warmup.json and rl.json.
std::string cmd_report(const RunConfig& cfg);

// Dispatches on a command name; throws ConfigError for unknown names.
std::string run_command(const std::string& name, const RunConfig& cfg);

// Files a finished run leaves behind that must not depend on wall-clock time.
bool is_deterministic_output(const std::string& file_name);

}  // namespace itp
