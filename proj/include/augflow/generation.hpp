#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "augflow/corpus.hpp"
#include "augflow/evaluator.hpp"
#include "augflow/gateway.hpp"
#include "augflow/pattern_analysis.hpp"
#include "augflow/prompts.hpp"

namespace augflow {

/// How many synthetic samples each branch and each strategy should produce.
struct QuotaPlan {
  std::size_t total = 0;
  std::size_t pattern_total = 0;
  std::size_t error_total = 0;
  std::vector<std::size_t> per_strategy;

  friend bool operator==(const QuotaPlan&, const QuotaPlan&) = default;
};

nlohmann::json quota_to_json(const QuotaPlan& q);
QuotaPlan quota_from_json(const nlohmann::json& j);

/// total = round(ratio * train_size). With training errors present the
/// pattern branch gets ceil(total * pattern_share) and the error branch the
/// rest; otherwise the pattern branch gets everything. The pattern share is
/// spread over K strategies with remainders going to lower indices.
///
/// K = 0 (no validation patterns) hands the whole total to the error branch.
QuotaPlan plan_quota(std::size_t train_size, std::size_t k, std::size_t train_error_count, double ratio,
                     double pattern_share = 0.5);

enum class Branch { pattern, error };

std::string_view to_string(Branch b);

struct GenerationBatch {
  std::string batch_id;
  Branch branch = Branch::pattern;
  std::optional<StrategyCard> strategy;  // pattern branch only
  std::vector<Sample> seed_samples;      // pattern branch: training-split examples
  std::vector<ErrorRecord> seed_errors;  // error branch: training-split errors
  std::size_t requested = 0;
  int attempt = 1;
  std::optional<std::string> feedback;  // judge feedback from the previous attempt
};

struct GenerationResult {
  std::vector<Sample> samples;
  std::size_t malformed = 0;          // entries that were not a valid one-turn sample
  std::size_t isolation_rejects = 0;  // entries referring to or quoting validation data
  std::size_t truncated = 0;          // over-production beyond `requested`
  bool unparseable = false;           // no JSON array in the output (or transport failure)
  std::string prompt;
};

struct GenerationConfig {
  std::size_t num_samples_per_example = 2;
  std::size_t batch_size = 10;  // samples requested per generation call
};

/// Seed examples needed for `requested` samples: ceil(requested / per_example).
std::size_t seeds_needed(std::size_t requested, std::size_t per_example);

/// Split each strategy's quota into batches of at most `batch_size` and draw
/// the seed examples for each batch from `train_pool` (training split only).
std::vector<GenerationBatch> plan_pattern_batches(const std::vector<StrategyCard>& cards, const QuotaPlan& quota,
                                                  const Dataset& train_pool, const GenerationConfig& cfg,
                                                  const std::string& id_prefix, std::uint64_t seed);

/// Split the error-branch quota into batches and draw seeds from `error_pool`.
std::vector<GenerationBatch> plan_error_batches(const std::vector<ErrorRecord>& error_pool, std::size_t error_total,
                                                const GenerationConfig& cfg, const std::string& id_prefix,
                                                std::uint64_t seed);

/// The Data Generation Agent: renders the branch prompt, calls the generator
/// (purpose=generation) and turns its JSON into synthetic samples.
class GenerationAgent {
 public:
  GenerationAgent(Gateway& gateway, const PromptLibrary& prompts, GenerationConfig cfg = {},
                  const ValidationGuard* guard = nullptr);

  std::string render_prompt(const GenerationBatch& batch) const;

  GenerationResult generate(const GenerationBatch& batch);
  GenerationResult generate_pattern_guided(const GenerationBatch& batch);
  GenerationResult generate_error_based(const GenerationBatch& batch);

  /// Parse generator output against the batch's seeds (no model call).
  GenerationResult parse_output(const GenerationBatch& batch, const std::string& raw) const;

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
  GenerationConfig cfg_;
  const ValidationGuard* guard_;
};

}  // namespace augflow
