#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "augflow/corpus.hpp"
#include "augflow/gateway.hpp"
#include "augflow/generation.hpp"
#include "augflow/pattern_analysis.hpp"
#include "augflow/prompts.hpp"

namespace augflow {

struct SampleRating {
  std::string sample_id;
  int quality_rating = 0;  // 1..10
  std::string feedback;
};

struct QualityVerdict {
  std::vector<SampleRating> per_sample;
  double batch_score = 0.0;  // mean of per_sample ratings
  bool accepted = false;     // batch_score >= threshold
  int attempt = 1;
  std::string feedback;            // text handed to the next generation attempt
  std::vector<std::string> flags;  // clamped ratings, missing ratings, unparseable output
};

nlohmann::json verdict_to_json(const QualityVerdict& v);

struct QualityConfig {
  double threshold = 7.0;
  int max_attempts = 3;
  /// Keep the last attempt's samples instead of dropping the batch once
  /// max_attempts is exhausted.
  bool accept_last_attempt = false;
};

/// Mean rating and threshold decision for a set of ratings.
QualityVerdict make_verdict(std::vector<SampleRating> ratings, double threshold, int attempt);

/// The Quality Control Agent.
class QualityAgent {
 public:
  QualityAgent(Gateway& gateway, const PromptLibrary& prompts, QualityConfig cfg = {});

  const QualityConfig& config() const { return cfg_; }

  /// `strategies` is empty for error-branch batches (no adherence dimension).
  std::string render_prompt(const std::vector<std::pair<Sample, Sample>>& pairs,
                            const std::vector<StrategyCard>& strategies) const;

  /// One quality_control call. Ratings are read for type="synthetic" entries
  /// only; out-of-range ratings are clamped to [1, 10] and flagged.
  /// Unparseable output yields a rejected verdict.
  QualityVerdict review_batch(const std::vector<std::pair<Sample, Sample>>& pairs,
                              const std::vector<StrategyCard>& strategies, int attempt = 1);

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
  QualityConfig cfg_;
};

struct AttemptRecord {
  int attempt = 0;
  std::size_t produced = 0;
  double batch_score = 0.0;
  bool accepted = false;
  std::string feedback;
  std::vector<std::string> flags;
};

struct GateOutcome {
  std::string batch_id;
  Branch branch = Branch::pattern;
  std::vector<Sample> accepted_samples;
  std::vector<AttemptRecord> history;
  bool dropped = false;
};

nlohmann::json gate_to_json(const GateOutcome& g);

using BatchProducer = std::function<GenerationResult(const GenerationBatch&)>;

/// Pairs each synthetic sample with the training sample it was based on.
using OriginalLookup = std::function<const Sample*(const std::string& id)>;

/// Generate, review and regenerate with the judge's feedback until a batch is
/// accepted or max_attempts is reached. `first` may carry an already
/// generated first attempt (staged output); otherwise the producer is called.
GateOutcome qc_gate(const BatchProducer& producer, GenerationBatch batch, QualityAgent& judge,
                    const OriginalLookup& originals, std::optional<GenerationResult> first = std::nullopt);

}  // namespace augflow
