#include "augflow/evaluator.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <stdexcept>

#include <unistd.h>

#include <spdlog/spdlog.h>

#include "augflow/errors.hpp"
#include "augflow/process.hpp"

namespace augflow {

using nlohmann::json;

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::exact_match:
      return "exact_match";
    case TaskKind::multiple_choice:
      return "multiple_choice";
    case TaskKind::numeric:
      return "numeric";
    case TaskKind::external_command:
      return "external_command";
  }
  return "exact_match";
}

void TaskSpec::validate() const {
  if (kind == TaskKind::multiple_choice && choice_labels.empty()) {
    throw ConfigError("multiple_choice task needs choice_labels");
  }
  if (kind == TaskKind::numeric && numeric_marker.empty()) throw ConfigError("numeric task needs numeric_marker");
  if (kind == TaskKind::external_command && command_template.empty()) {
    throw ConfigError("external_command task needs command_template");
  }
  if (numeric_epsilon < 0) throw ConfigError("numeric_epsilon must be >= 0");
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  const auto kind = j.value("kind", std::string("exact_match"));
  if (kind == "exact_match") {
    t.kind = TaskKind::exact_match;
  } else if (kind == "multiple_choice") {
    t.kind = TaskKind::multiple_choice;
  } else if (kind == "numeric") {
    t.kind = TaskKind::numeric;
  } else if (kind == "external_command") {
    t.kind = TaskKind::external_command;
  } else {
    throw ConfigError("unknown task kind: " + kind);
  }
  t.choice_labels = j.value("choice_labels", std::vector<std::string>{});
  t.numeric_marker = j.value("numeric_marker", std::string{});
  t.numeric_epsilon = j.value("numeric_epsilon", 0.0);
  t.command_template = j.value("command_template", std::string{});
  t.validate();
  return t;
}

json task_to_json(const TaskSpec& t) {
  json j = {{"kind", to_string(t.kind)}};
  if (!t.choice_labels.empty()) j["choice_labels"] = t.choice_labels;
  if (!t.numeric_marker.empty()) j["numeric_marker"] = t.numeric_marker;
  if (t.numeric_epsilon != 0.0) j["numeric_epsilon"] = t.numeric_epsilon;
  if (!t.command_template.empty()) j["command_template"] = t.command_template;
  return j;
}

json error_to_json(const ErrorRecord& e) {
  return {{"sample_id", e.sample_id}, {"x", e.x}, {"y", e.y}, {"y_hat", e.y_hat}, {"split", to_string(e.split)}};
}

ErrorRecord error_from_json(const json& j) {
  ErrorRecord e;
  e.sample_id = j.at("sample_id").get<std::string>();
  e.x = j.at("x").get<std::string>();
  e.y = j.at("y").get<std::string>();
  e.y_hat = j.at("y_hat").get<std::string>();
  e.split = j.value("split", std::string("train")) == "val" ? Split::val : Split::train;
  return e;
}

std::string normalize_exact_match(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(c)));
  }
  std::string out;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && std::isspace(static_cast<unsigned char>(cleaned[i]))) ++i;
    const auto start = i;
    while (i < cleaned.size() && !std::isspace(static_cast<unsigned char>(cleaned[i]))) ++i;
    if (start == i) break;
    const auto word = cleaned.substr(start, i - start);
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

namespace {

const std::regex& number_pattern() {
  static const std::regex re(R"(-?[0-9][0-9,]*(?:\.[0-9]+)?)");
  return re;
}

/// Canonical decimal form: no grouping commas, no leading zeros in the
/// integer part, no trailing zeros in the fraction, no "-0".
std::string canonical_number(std::string token) {
  std::erase(token, ',');
  bool negative = false;
  if (!token.empty() && token.front() == '-') {
    negative = true;
    token.erase(0, 1);
  }
  std::string int_part = token;
  std::string frac_part;
  if (auto dot = token.find('.'); dot != std::string::npos) {
    int_part = token.substr(0, dot);
    frac_part = token.substr(dot + 1);
  }
  while (int_part.size() > 1 && int_part.front() == '0') int_part.erase(0, 1);
  if (int_part.empty()) int_part = "0";
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (negative && out != "0") out = "-" + out;
  return out;
}

std::optional<std::string> first_number(std::string_view text) {
  std::cmatch m;
  if (std::regex_search(text.begin(), text.end(), m, number_pattern())) return canonical_number(m.str());
  return std::nullopt;
}

std::optional<std::string> last_number(std::string_view text) {
  std::optional<std::string> last;
  for (std::cregex_iterator it(text.begin(), text.end(), number_pattern()), end; it != end; ++it) last = it->str();
  if (!last) return std::nullopt;
  return canonical_number(*last);
}

std::string extract_choice(std::string_view text, const std::vector<std::string>& labels) {
  // A label counts when it is a whole token: bounded by non-alphanumerics.
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word(text[i])) ++i;
    const auto start = i;
    while (i < text.size() && is_word(text[i])) ++i;
    const auto token = text.substr(start, i - start);
    for (const auto& l : labels) {
      if (token == l) return l;
    }
  }
  throw NoAnswerFound("no choice label in: " + std::string(text.substr(0, 80)));
}

bool run_external_check(std::string_view prediction, std::string_view gold, const TaskSpec& task) {
  const auto dir = std::filesystem::temp_directory_path().string();
  std::string pred_name = dir + "/augflow-predXXXXXX";
  std::string gold_name = dir + "/augflow-goldXXXXXX";
  const int pfd = ::mkstemp(pred_name.data());
  const int gfd = ::mkstemp(gold_name.data());
  if (pfd < 0 || gfd < 0) throw IoError("cannot create temp files for external check");
  ::close(pfd);
  ::close(gfd);
  std::ofstream(pred_name, std::ios::binary) << prediction;
  std::ofstream(gold_name, std::ios::binary) << gold;
  const auto argv = expand_command(task.command_template, {{"pred_file", pred_name}, {"gold_file", gold_name}});
  bool failed = true;
  try {
    failed = run_process(argv).exit_code != 0;
  } catch (const std::exception& e) {
    spdlog::warn("external check could not run: {}", e.what());
  }
  std::filesystem::remove(pred_name);
  std::filesystem::remove(gold_name);
  return failed;
}

}  // namespace

std::string extract_answer(std::string_view text, const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::multiple_choice:
      return extract_choice(text, task.choice_labels);
    case TaskKind::numeric: {
      if (auto pos = text.rfind(task.numeric_marker); pos != std::string_view::npos) {
        if (auto n = first_number(text.substr(pos + task.numeric_marker.size()))) return *n;
      }
      if (auto n = last_number(text)) return *n;
      throw NoAnswerFound("no number in: " + std::string(text.substr(0, 80)));
    }
    case TaskKind::exact_match: {
      auto norm = normalize_exact_match(text);
      if (norm.empty()) throw NoAnswerFound("empty answer after normalization");
      return norm;
    }
    case TaskKind::external_command:
      return std::string(text);
  }
  return std::string(text);
}

bool is_failure(std::string_view prediction, std::string_view gold, const TaskSpec& task) {
  if (prediction == kNoResponse) return true;
  if (task.kind == TaskKind::external_command) return run_external_check(prediction, gold, task);
  std::string pred_answer;
  std::string gold_answer;
  try {
    pred_answer = extract_answer(prediction, task);
    gold_answer = extract_answer(gold, task);
  } catch (const NoAnswerFound&) {
    return true;
  }
  if (task.kind == TaskKind::numeric && task.numeric_epsilon > 0) {
    return std::fabs(std::strtod(pred_answer.c_str(), nullptr) - std::strtod(gold_answer.c_str(), nullptr)) >
           task.numeric_epsilon;
  }
  return pred_answer != gold_answer;
}

std::vector<Prediction> predict_all(const Dataset& ds, Gateway& gateway) {
  std::vector<ChatRequest> reqs;
  reqs.reserve(ds.size());
  for (const auto& s : ds.samples) reqs.push_back(gateway.make_request(Purpose::student_eval, s.query()));
  const auto results = gateway.complete_batch(reqs);

  std::vector<Prediction> preds;
  preds.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (results[i].ok()) {
      preds.push_back({ds.samples[i].id, *results[i].text});
    } else {
      spdlog::warn("student gave no response for {}: {}", ds.samples[i].id, results[i].error);
      preds.push_back({ds.samples[i].id, std::string(kNoResponse)});
    }
  }
  return preds;
}

std::vector<ErrorRecord> collect_errors(const Dataset& ds, const std::vector<Prediction>& preds, const TaskSpec& task) {
  if (preds.size() != ds.size()) {
    throw std::logic_error("collect_errors: " + std::to_string(preds.size()) + " predictions for " +
                           std::to_string(ds.size()) + " samples");
  }
  std::vector<ErrorRecord> errors;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (preds[i].sample_id != s.id) {
      throw std::logic_error("collect_errors: prediction " + preds[i].sample_id + " does not match sample " + s.id);
    }
    if (is_failure(preds[i].text, s.answer(), task)) {
      errors.push_back({s.id, s.query(), s.answer(), preds[i].text, s.split});
    }
  }
  return errors;
}

}  // namespace augflow
