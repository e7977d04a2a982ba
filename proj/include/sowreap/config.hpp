#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sowreap/align.hpp"
#include "sowreap/sow.hpp"
#include "sowreap/transformer.hpp"

namespace sowreap {

using Json = nlohmann::json;

struct TrainingConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 5;  // 0 disables early stopping
  double valid_fraction = 0.05;
  /// (first 0-based epoch, coefficient) steps for the REAP coverage weight.
  std::vector<std::pair<int, double>> coverage_schedule{{0, 1.0}, {10, 0.5}, {20, 0.0}};

  bool operator==(const TrainingConfig&) const = default;
};

/// Coefficient in effect for a 0-based epoch.
double coverage_coefficient(const std::vector<std::pair<int, double>>& schedule, int epoch);

struct GenerationConfig {
  std::string decoding = "top-k";  // "top-k" or "beam"
  int top_k = 20;
  int beam = 10;
  int max_len = 100;
  double rejection_threshold = 0.5;

  bool operator==(const GenerationConfig&) const = default;
};

struct PathConfig {
  std::string corpus;
  std::string embeddings = "hash";
  std::string data_dir = "run/data";
  std::string checkpoint_dir = "run/checkpoints";
  std::string output_dir = "run/out";
  std::string input;        // generate: inputs JSONL
  std::string generations;  // evaluate
  std::string references;   // evaluate

  bool operator==(const PathConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 1;
  int bpe_merges = 8000;
  int compliance_bins = 10;
  int bootstrap_resamples = 1000;
  PathConfig paths;
  nn::ModelConfig sow_model{.variant = nn::Variant::Sow};
  nn::ModelConfig reap_model{.variant = nn::Variant::Reap};
  TrainingConfig training;
  EngineConfig engine;
  GenerationConfig generation;
  FilterConfig filter;

  bool operator==(const RunConfig& o) const;
};

Json to_json(const nn::ModelConfig& c);
nn::ModelConfig model_config_from_json(const Json& j, nn::Variant variant);
Json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected (FormatError).
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace sowreap
