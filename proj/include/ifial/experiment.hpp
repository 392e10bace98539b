#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ifial/eval.hpp"

namespace ifial {

struct ExperimentConfig {
  int version = 1;
  std::string dataset_path;
  std::string schema_path;
  std::string dataset_id;  // restricted to [A-Za-z0-9_.-] so the results CSV needs no quoting
  std::vector<MethodId> methods;
  std::vector<Mechanism> mechanisms;
  std::vector<double> rates;
  int k = 0;  // 0 = ceil(d/2)
  ModelConfig model = ModelConfig::desk();
  TrainConfig train = TrainConfig::desk();
  int folds = 5;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  bool reference = false;  // also score complete data (rate 0) for robustness curves
};

// Strict parse: unknown keys rejected; validation failures name the offending
// field path (e.g. rates[0]).
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig experiment_config_from_json(const std::string& text, const std::string& origin);

// Full grid (method x mechanism x rate x seed x fold). Writes results.csv,
// rank_table.json, win_matrix.json, robustness.csv (when reference results
// exist), session_logs.json and manifest.json into the output directory.
// Rerunning an identical config reproduces results.csv byte for byte.
void run_experiment(const ExperimentConfig& cfg, int jobs, bool resume);

// Rebuild the report files from an existing results CSV (used by the report
// subcommand). Refuses results whose manifest hash no longer matches.
void report_from_results(const std::string& results_path, const std::string& out_dir);

std::uint64_t file_content_hash(const std::string& path);  // FNV-1a over the raw bytes

}  // namespace ifial
