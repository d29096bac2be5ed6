#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "augflow/clustering.hpp"
#include "augflow/config.hpp"
#include "augflow/corpus.hpp"
#include "augflow/evaluator.hpp"
#include "augflow/gateway.hpp"
#include "augflow/generation.hpp"
#include "augflow/pattern_analysis.hpp"
#include "augflow/prompts.hpp"
#include "augflow/quality.hpp"

namespace augflow {

/// Builds the chat provider behind one purpose.
using ChatProviderFactory = std::function<std::shared_ptr<ChatProvider>(Purpose, const ProviderSpec&)>;

/// http / simulated providers, wrapped in a replay provider for dry runs.
ChatProviderFactory default_provider_factory(const RunConfig& cfg);

/// One executed stage. `inputs` name artifacts the stage read, `outputs` the
/// ones it produced; `seq` is a run-wide logical clock.
struct StageMark {
  std::string name;
  std::size_t seq = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

struct QcStats {
  std::size_t accepted_batches = 0;
  std::size_t dropped_batches = 0;
  std::size_t total_attempts = 0;
  std::size_t accepted_samples = 0;
};

struct CallCounts {
  std::size_t calls = 0;
  std::size_t attempts = 0;
  std::size_t failures = 0;
};

/// Everything one iteration produces, in the order the stages produce it.
struct IterationContext {
  int iteration = 0;
  std::string student_model;

  std::vector<ErrorRecord> train_errors;
  std::vector<ErrorRecord> val_errors;
  std::size_t train_size = 0;
  std::size_t val_size = 0;

  std::vector<ErrorRecord> analyzed_errors;  // subsampled validation errors
  AnalysisOutcome analysis;
  std::optional<ClusteringOutcome> clustering;
  std::vector<ErrorPattern> patterns;
  StrategyOutcome strategies;

  QuotaPlan quota;
  std::vector<ErrorRecord> error_seed_pool;
  std::vector<GenerationBatch> batches;
  std::vector<GenerationResult> first_attempts;  // positional with batches

  std::vector<GateOutcome> gates;
  QcStats qc;
  std::string synthetic_file;     // relative to work_dir
  std::string merged_train_file;  // relative to work_dir
  std::size_t merged_size = 0;

  std::string next_model;
  std::map<Purpose, CallCounts> calls;
  std::vector<StageMark> stages;
  std::map<std::string, std::size_t> produced_at;  // artifact -> seq

  bool has_stage(std::string_view name) const;
};

nlohmann::json context_to_json(const IterationContext& c);
IterationContext context_from_json(const nlohmann::json& j);

/// The orchestrator-owned record of where the run stands.
struct PipelineState {
  int iteration = 0;  // completed iterations
  std::string train_file;          // original training set
  std::string val_file;
  std::string current_train_file;  // input of the next fine-tune (relative to work_dir when generated)
  ProviderBinding model_endpoint;  // current student
  std::size_t hook_calls = 0;
  std::size_t stage_seq = 0;
  std::optional<StageMark> initial_finetune;
  std::vector<IterationContext> iterations;
};

nlohmann::json state_to_json(const PipelineState& s);
PipelineState state_from_json(const nlohmann::json& j);

/// Iteration report: error counts, K, patterns, strategies, quota, QC stats,
/// dropped batches, call counts and the stage log.
nlohmann::json iteration_report(const IterationContext& c);
nlohmann::json build_report(const PipelineState& s, const RunConfig& cfg);

class Orchestrator {
 public:
  explicit Orchestrator(RunConfig cfg);
  Orchestrator(RunConfig cfg, ChatProviderFactory factory);

  const RunConfig& config() const { return cfg_; }
  Gateway& gateway() { return gateway_; }
  const Dataset& train() const { return train_; }
  const Dataset& val() const { return val_; }
  const ValidationGuard& guard() const { return guard_; }

  /// Fresh state: nothing fine-tuned yet.
  PipelineState initial_state() const;

  /// Run the hook on `train_file`, read the endpoint descriptor and rebind
  /// the student. Throws HookFailed / HookProtocolError.
  ProviderBinding invoke_finetune_hook(PipelineState& state, const std::filesystem::path& train_file, int iteration);

  /// Initial fine-tune on the original training set.
  void initial_finetune(PipelineState& state);

  // Stages of one iteration, in loop order. Each records a StageMark.
  void stage_evaluate(PipelineState& state, IterationContext& ctx);
  void stage_analyze(PipelineState& state, IterationContext& ctx);
  void stage_generate(PipelineState& state, IterationContext& ctx);
  void stage_quality(PipelineState& state, IterationContext& ctx);
  void stage_finetune(PipelineState& state, IterationContext& ctx);

  /// All stages of one iteration. On failure the partial context and state
  /// are checkpointed before the error propagates.
  void run_iteration(PipelineState& state);

  /// Initial fine-tune, then max_iterations iterations; writes report.json.
  nlohmann::json run_pipeline();

  std::filesystem::path iteration_dir(int iteration) const;
  void checkpoint(const PipelineState& state, const IterationContext* ctx) const;
  /// Reads state.json and rebinds the student it names.
  std::optional<PipelineState> load_state();
  IterationContext load_context(int iteration) const;
  nlohmann::json emit_report(const PipelineState& state) const;

 private:
  StageMark& mark(PipelineState& state, IterationContext& ctx, std::string name, std::vector<std::string> inputs,
                  std::vector<std::string> outputs);
  Dataset current_train(const PipelineState& state) const;
  void rebind_student(const ProviderBinding& binding);

  RunConfig cfg_;
  ChatProviderFactory factory_;
  Gateway gateway_;
  PromptLibrary prompts_;
  Dataset train_;
  Dataset val_;
  ValidationGuard guard_;
};

}  // namespace augflow
