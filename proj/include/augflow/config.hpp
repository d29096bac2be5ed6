#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "augflow/evaluator.hpp"
#include "augflow/gateway.hpp"
#include "augflow/generation.hpp"
#include "augflow/pattern_analysis.hpp"
#include "augflow/quality.hpp"

namespace augflow {

/// How a purpose's provider is reached. "http" is an OpenAI-compatible
/// endpoint; "simulated" is the built-in offline simulator.
struct ProviderSpec {
  std::string kind = "http";
  ProviderBinding binding;
};

struct EmbeddingSpec {
  std::string kind = "hash";  // "hash" or "http"
  std::size_t dim = 256;
  std::uint64_t seed = 0;
  ProviderBinding binding;  // http only
};

/// Parameters handed to the fine-tune hook through hook_config.json.
struct HookSpec {
  std::string command;  // placeholders: {train_file} {iteration} {output_dir} {hook_config}
  std::string base_model;
  int lora_r = 32;
  int lora_alpha = 32;
  double lora_dropout = 0.05;
  int epochs = 5;
  double learning_rate = 2e-4;
  nlohmann::json extra = nlohmann::json::object();
};

struct ReplaySpec {
  std::filesystem::path dir;
  bool record = false;  // forward misses to the configured provider and store the answer
};

enum class SeedPool { merged, original };

struct RunConfig {
  std::filesystem::path train_file;
  std::filesystem::path val_file;
  std::filesystem::path work_dir = "augflow-run";
  std::filesystem::path prompts_dir;  // empty: built-in templates

  TaskSpec task;
  std::map<Purpose, ProviderSpec> providers;  // one entry per purpose after loading
  EmbeddingSpec embedding;
  bool distinct_judge = true;

  std::uint64_t seed = 0;
  int max_iterations = 3;
  std::size_t subsample_n = 50;
  std::size_t error_seed_pool = 50;
  double ratio = 0.5;
  double pattern_error_ratio = 0.5;
  SeedPool seed_pool = SeedPool::merged;

  PatternConfig pattern;
  GenerationConfig generation;
  QualityConfig quality;

  HookSpec hook;
  ReplaySpec replay;
  bool dry_run = false;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
};

/// Relative paths are resolved against `base_dir`. Provider blocks are read
/// from "providers": {"default": {...}, "<purpose>": {...}, "embedding": {...}};
/// a purpose block overrides the default field by field.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const RunConfig& cfg);

RunConfig load_config(const std::filesystem::path& path);

std::string_view to_string(SeedPool p);

}  // namespace augflow
