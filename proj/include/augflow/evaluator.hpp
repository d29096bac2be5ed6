#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "augflow/corpus.hpp"
#include "augflow/gateway.hpp"

namespace augflow {

enum class TaskKind { exact_match, multiple_choice, numeric, external_command };

std::string_view to_string(TaskKind k);

struct TaskSpec {
  TaskKind kind = TaskKind::exact_match;
  std::vector<std::string> choice_labels;  // multiple_choice
  std::string numeric_marker;              // numeric, e.g. "####"
  double numeric_epsilon = 0.0;            // numeric; 0 means exact comparison
  std::string command_template;            // external_command; {pred_file} {gold_file}

  /// Throws ConfigError on a kind/field mismatch.
  void validate() const;
};

TaskSpec task_from_json(const nlohmann::json& j);
nlohmann::json task_to_json(const TaskSpec& t);

/// A failed evaluation triple: query, gold answer, prediction.
struct ErrorRecord {
  std::string sample_id;
  std::string x;
  std::string y;
  std::string y_hat;
  Split split = Split::train;

  friend bool operator==(const ErrorRecord&, const ErrorRecord&) = default;
};

nlohmann::json error_to_json(const ErrorRecord& e);
ErrorRecord error_from_json(const nlohmann::json& j);

struct Prediction {
  std::string sample_id;
  std::string text;
};

/// Prediction text recorded when the student never answered.
inline constexpr std::string_view kNoResponse = "<no-response>";

/// Lowercase, drop punctuation and the articles a/an/the, collapse whitespace.
std::string normalize_exact_match(std::string_view text);

/// Canonical comparable answer. Numeric answers come back as a canonical
/// decimal string ("-1234.5", "72"). Throws NoAnswerFound.
std::string extract_answer(std::string_view text, const TaskSpec& task);

/// True when the prediction does not match the gold answer under the task's
/// rule. Extraction failures and missing responses count as failures.
bool is_failure(std::string_view prediction, std::string_view gold, const TaskSpec& task);

/// One student_eval call per sample, in dataset order. Calls that fail after
/// retries yield kNoResponse.
std::vector<Prediction> predict_all(const Dataset& ds, Gateway& gateway);

/// The failing triples in dataset order, tagged with the dataset's split.
std::vector<ErrorRecord> collect_errors(const Dataset& ds, const std::vector<Prediction>& preds, const TaskSpec& task);

}  // namespace augflow
