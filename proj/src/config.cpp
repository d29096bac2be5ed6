#include "augflow/config.hpp"

#include <fstream>
#include <set>

#include "augflow/errors.hpp"

namespace augflow {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kKnownKeys = {
    "train_file",   "val_file",        "work_dir",          "prompts_dir",    "task",
    "providers",    "distinct_judge",  "seed",              "max_iterations", "subsample_n",
    "error_seed_pool", "ratio",        "pattern_error_ratio", "seed_pool",    "k_min",
    "k_max",        "kmeans_restarts", "analysis_batch_size", "generation_batch_size",
    "num_samples_per_example", "threshold", "max_attempts", "accept_last_attempt",
    "hook",         "replay"};

fs::path resolve(const json& j, const char* key, const fs::path& base, const fs::path& fallback = {}) {
  if (!j.contains(key)) return fallback;
  fs::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

ProviderSpec provider_from_json(const json& j, const ProviderSpec& defaults) {
  ProviderSpec s = defaults;
  s.kind = j.value("kind", s.kind);
  if (s.kind != "http" && s.kind != "simulated") throw ConfigError("unknown provider kind: " + s.kind);
  s.binding = binding_from_json(j, s.binding);
  return s;
}

json provider_to_json(const ProviderSpec& s) {
  json j = binding_to_json(s.binding);
  j["kind"] = s.kind;
  return j;
}

}  // namespace

std::string_view to_string(SeedPool p) { return p == SeedPool::merged ? "merged" : "original"; }

void RunConfig::validate() const {
  if (train_file.empty()) throw ConfigError("train_file is required");
  if (val_file.empty()) throw ConfigError("val_file is required");
  task.validate();
  for (auto p : kAllPurposes) {
    auto it = providers.find(p);
    if (it == providers.end()) throw ConfigError("no provider for purpose " + std::string(to_string(p)));
    if (it->second.binding.model_id.empty()) {
      throw ConfigError("no model_id for purpose " + std::string(to_string(p)));
    }
    if (it->second.kind == "http" && it->second.binding.endpoint.empty() && !(dry_run && !replay.record)) {
      throw ConfigError("no endpoint for purpose " + std::string(to_string(p)));
    }
  }
  if (embedding.kind != "hash" && embedding.kind != "http") throw ConfigError("unknown embedding kind: " + embedding.kind);
  if (embedding.kind == "hash" && embedding.dim == 0) throw ConfigError("embedding dim must be >= 1");
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (pattern.k_min < 2 || pattern.k_max < pattern.k_min) throw ConfigError("k range must satisfy 2 <= k_min <= k_max");
  if (pattern.analysis_batch_size == 0) throw ConfigError("analysis_batch_size must be >= 1");
  if (pattern.kmeans_restarts < 1) throw ConfigError("kmeans_restarts must be >= 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio must lie in (0, 1]");
  if (!(pattern_error_ratio >= 0.0 && pattern_error_ratio <= 1.0)) {
    throw ConfigError("pattern_error_ratio must lie in [0, 1]");
  }
  if (generation.batch_size == 0 || generation.num_samples_per_example == 0) {
    throw ConfigError("generation_batch_size and num_samples_per_example must be >= 1");
  }
  if (quality.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (quality.threshold < 1.0 || quality.threshold > 10.0) throw ConfigError("threshold must lie in [1, 10]");
  if (dry_run && replay.dir.empty()) throw ConfigError("dry run needs replay.dir");
}

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    for (const auto& [key, _] : j.items()) {
      if (!kKnownKeys.count(key)) throw ConfigError("unknown config key: " + key);
    }
    c.train_file = resolve(j, "train_file", base_dir);
    c.val_file = resolve(j, "val_file", base_dir);
    c.work_dir = resolve(j, "work_dir", base_dir, c.work_dir);
    c.prompts_dir = resolve(j, "prompts_dir", base_dir);
    if (j.contains("task")) c.task = task_from_json(j.at("task"));

    const json providers = j.value("providers", json::object());
    ProviderSpec def;
    if (providers.contains("default")) def = provider_from_json(providers.at("default"), def);
    for (auto p : kAllPurposes) {
      const std::string name(to_string(p));
      c.providers[p] = providers.contains(name) ? provider_from_json(providers.at(name), def) : def;
    }
    for (const auto& [key, _] : providers.items()) {
      if (key == "default" || key == "embedding") continue;
      parse_purpose(key);
    }
    if (providers.contains("embedding")) {
      const auto& e = providers.at("embedding");
      c.embedding.kind = e.value("kind", c.embedding.kind);
      c.embedding.dim = e.value("dim", c.embedding.dim);
      c.embedding.seed = e.value("seed", c.embedding.seed);
      c.embedding.binding = binding_from_json(e, {});
    }
    c.distinct_judge = j.value("distinct_judge", c.distinct_judge);

    c.seed = j.value("seed", c.seed);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.subsample_n = j.value("subsample_n", c.subsample_n);
    c.error_seed_pool = j.value("error_seed_pool", c.error_seed_pool);
    c.ratio = j.value("ratio", c.ratio);
    c.pattern_error_ratio = j.value("pattern_error_ratio", c.pattern_error_ratio);
    const auto pool = j.value("seed_pool", std::string(to_string(c.seed_pool)));
    if (pool == "merged") {
      c.seed_pool = SeedPool::merged;
    } else if (pool == "original") {
      c.seed_pool = SeedPool::original;
    } else {
      throw ConfigError("seed_pool must be \"merged\" or \"original\"");
    }

    c.pattern.k_min = j.value("k_min", c.pattern.k_min);
    c.pattern.k_max = j.value("k_max", c.pattern.k_max);
    c.pattern.kmeans_restarts = j.value("kmeans_restarts", c.pattern.kmeans_restarts);
    c.pattern.analysis_batch_size = j.value("analysis_batch_size", c.pattern.analysis_batch_size);
    c.generation.batch_size = j.value("generation_batch_size", c.generation.batch_size);
    c.generation.num_samples_per_example = j.value("num_samples_per_example", c.generation.num_samples_per_example);
    c.quality.threshold = j.value("threshold", c.quality.threshold);
    c.quality.max_attempts = j.value("max_attempts", c.quality.max_attempts);
    c.quality.accept_last_attempt = j.value("accept_last_attempt", c.quality.accept_last_attempt);

    if (j.contains("hook")) {
      const auto& h = j.at("hook");
      c.hook.command = h.value("command", c.hook.command);
      c.hook.base_model = h.value("base_model", c.hook.base_model);
      c.hook.lora_r = h.value("lora_r", c.hook.lora_r);
      c.hook.lora_alpha = h.value("lora_alpha", c.hook.lora_alpha);
      c.hook.lora_dropout = h.value("lora_dropout", c.hook.lora_dropout);
      c.hook.epochs = h.value("epochs", c.hook.epochs);
      c.hook.learning_rate = h.value("learning_rate", c.hook.learning_rate);
      c.hook.extra = h.value("extra", c.hook.extra);
    }
    if (j.contains("replay")) {
      const auto& r = j.at("replay");
      c.replay.dir = resolve(r, "dir", base_dir);
      c.replay.record = r.value("record", c.replay.record);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  json providers = json::object();
  for (const auto& [p, spec] : c.providers) providers[std::string(to_string(p))] = provider_to_json(spec);
  json emb = {{"kind", c.embedding.kind}, {"dim", c.embedding.dim}, {"seed", c.embedding.seed}};
  if (c.embedding.kind == "http") emb.update(binding_to_json(c.embedding.binding));
  providers["embedding"] = emb;
  return {{"train_file", c.train_file.string()},
          {"val_file", c.val_file.string()},
          {"work_dir", c.work_dir.string()},
          {"prompts_dir", c.prompts_dir.string()},
          {"task", task_to_json(c.task)},
          {"providers", providers},
          {"distinct_judge", c.distinct_judge},
          {"seed", c.seed},
          {"max_iterations", c.max_iterations},
          {"subsample_n", c.subsample_n},
          {"error_seed_pool", c.error_seed_pool},
          {"ratio", c.ratio},
          {"pattern_error_ratio", c.pattern_error_ratio},
          {"seed_pool", to_string(c.seed_pool)},
          {"k_min", c.pattern.k_min},
          {"k_max", c.pattern.k_max},
          {"kmeans_restarts", c.pattern.kmeans_restarts},
          {"analysis_batch_size", c.pattern.analysis_batch_size},
          {"generation_batch_size", c.generation.batch_size},
          {"num_samples_per_example", c.generation.num_samples_per_example},
          {"threshold", c.quality.threshold},
          {"max_attempts", c.quality.max_attempts},
          {"accept_last_attempt", c.quality.accept_last_attempt},
          {"hook",
           {{"command", c.hook.command},
            {"base_model", c.hook.base_model},
            {"lora_r", c.hook.lora_r},
            {"lora_alpha", c.hook.lora_alpha},
            {"lora_dropout", c.hook.lora_dropout},
            {"epochs", c.hook.epochs},
            {"learning_rate", c.hook.learning_rate},
            {"extra", c.hook.extra}}},
          {"replay", {{"dir", c.replay.dir.string()}, {"record", c.replay.record}}}};
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

}  // namespace augflow
