#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "augflow/clustering.hpp"
#include "augflow/corpus.hpp"
#include "augflow/evaluator.hpp"
#include "augflow/gateway.hpp"
#include "augflow/prompts.hpp"

namespace augflow {

/// Root cause and scenario for one validation error.
struct ErrorAnalysis {
  std::size_t sample_idx = 0;  // 0-based position in the analysed batch
  std::string error_cause;
  std::string scenario_category;
  std::string source_error_id;

  /// Text that gets embedded for clustering.
  std::string embedding_text() const { return error_cause + "\n" + scenario_category; }

  friend bool operator==(const ErrorAnalysis&, const ErrorAnalysis&) = default;
};

struct ErrorPattern {
  std::size_t cluster_index = 0;
  std::string category_name;
  std::string error_pattern;
  std::vector<std::string> representative_samples;
  bool placeholder = false;  // categorisation failed; name is "Uncategorized cluster <i>"
};

struct StrategyCard {
  std::string category_name;
  std::string error_pattern;
  std::vector<std::string> representative_samples;
  std::string strategy_name;
  std::string generation_approach;
  std::vector<std::string> key_elements;
  std::size_t cluster_index = 0;
};

nlohmann::json analysis_to_json(const ErrorAnalysis& a);
ErrorAnalysis analysis_from_json(const nlohmann::json& j);
nlohmann::json pattern_to_json(const ErrorPattern& p);
ErrorPattern pattern_from_json(const nlohmann::json& j);
nlohmann::json card_to_json(const StrategyCard& c);
StrategyCard card_from_json(const nlohmann::json& j);

/// Strategy fields shown to the generator and the judge.
nlohmann::json card_prompt_view(const StrategyCard& c);

/// Copy of the card with every validation id/content fragment redacted.
StrategyCard redact_card(StrategyCard c, const ValidationGuard& guard);

struct PatternConfig {
  std::size_t analysis_batch_size = 10;  // B
  std::size_t k_min = 2;
  std::size_t k_max = 10;
  int kmeans_restarts = 5;
};

struct AnalysisOutcome {
  std::vector<ErrorAnalysis> analyses;
  std::size_t batches = 0;
  std::size_t skipped_batches = 0;  // unparseable after one re-ask, or transport failure
  std::size_t dropped_entries = 0;  // out-of-range index or missing fields
  std::size_t reasks = 0;
};

struct ClusteringOutcome {
  ElbowCurve curve;
  ClusterResult clusters;
};

struct StrategyOutcome {
  std::vector<StrategyCard> cards;
  std::vector<std::string> missing_categories;  // flagged after the retry
  bool aborted = false;                         // unparseable after one re-ask
  std::size_t reasks = 0;
  std::size_t retries = 0;
};

/// Seeded uniform selection of min(n, |errors|) validation errors, order kept.
/// Throws std::invalid_argument on a non-validation record.
std::vector<ErrorRecord> subsample_errors(const std::vector<ErrorRecord>& errors, std::size_t n, std::uint64_t seed);

/// Sample-level analysis, clustering, pattern categorisation and strategy
/// drafting over validation errors.
class PatternAgent {
 public:
  PatternAgent(Gateway& gateway, const PromptLibrary& prompts, PatternConfig cfg = {});

  std::string render_analysis_prompt(const std::vector<ErrorRecord>& batch) const;

  /// Batches of at most B errors, issued concurrently through the gateway.
  AnalysisOutcome analyze_errors(const std::vector<ErrorRecord>& errors);

  std::vector<Point> embed_analyses(const std::vector<ErrorAnalysis>& analyses);

  /// Elbow-selected K, then the clustering for that K.
  ClusteringOutcome cluster(const std::vector<Point>& points, std::uint64_t seed) const;

  std::string render_categorization_prompt(const std::vector<ErrorAnalysis>& members,
                                           const std::vector<ErrorRecord>& errors) const;

  /// Exactly one gateway call (plus one re-ask on unparseable output).
  ErrorPattern categorize_cluster(std::size_t cluster_index, const std::vector<ErrorAnalysis>& members,
                                  const std::vector<ErrorRecord>& errors);

  /// One categorisation per non-empty cluster, issued concurrently. Category
  /// names are made unique by suffixing " (cluster <i>)".
  std::vector<ErrorPattern> categorize_all(const ClusterResult& clusters, const std::vector<ErrorAnalysis>& analyses,
                                           const std::vector<ErrorRecord>& errors);

  std::string render_strategy_prompt(const std::vector<ErrorPattern>& patterns) const;

  /// One batched call covering every pattern; categories left unmatched get
  /// one follow-up call restricted to them, then are flagged.
  StrategyOutcome draft_strategies(const std::vector<ErrorPattern>& patterns);

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
  PatternConfig cfg_;
};

}  // namespace augflow
