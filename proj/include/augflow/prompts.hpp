#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace augflow {

/// Text with `{name}` placeholders; `{{` and `}}` render as literal braces.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  explicit PromptTemplate(std::string text);

  /// Throws std::invalid_argument on a placeholder missing from `vars` or an
  /// unbalanced brace.
  std::string render(const std::map<std::string, std::string>& vars) const;

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

/// The set of templates every agent uses, keyed by asset name
/// (error_analysis, pattern_categorization, strategy_drafting,
/// generation_pattern, generation_error, feedback_block, quality_control).
class PromptLibrary {
 public:
  /// Built-in defaults, compiled from assets/prompts.
  static PromptLibrary defaults();

  /// Defaults overridden by any "<name>.txt" present in `dir`.
  static PromptLibrary from_directory(const std::filesystem::path& dir);

  const PromptTemplate& get(std::string_view name) const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

}  // namespace augflow
