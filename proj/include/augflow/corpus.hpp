#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace augflow {

enum class Role { user, assistant };
enum class Origin { original, synthetic };
enum class Split { train, val };
enum class DatasetSplit { train, val, synthetic };

std::string_view to_string(Role r);
std::string_view to_string(Split s);
std::string_view to_string(DatasetSplit s);
DatasetSplit parse_dataset_split(std::string_view s);

struct Message {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

/// One single-turn conversation: exactly one user message then one assistant message.
struct Sample {
  std::string id;
  std::vector<Message> messages;
  Origin origin = Origin::original;
  Split split = Split::train;
  std::optional<std::string> based_on_strategy;
  std::optional<std::string> based_on_example;

  const std::string& query() const { return messages.at(0).content; }
  const std::string& answer() const { return messages.at(1).content; }

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Throws std::invalid_argument describing the first violated invariant.
void check_sample(const Sample& s);

Sample make_sample(std::string id, std::string query, std::string answer, Split split = Split::train);

struct Dataset {
  std::vector<Sample> samples;
  DatasetSplit split = DatasetSplit::train;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  const Sample* find(std::string_view id) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// JSON record as written to a JSONL file. Synthetic samples carry
/// sample_id / is_synthetic / based_on_strategy / based_on_example.
nlohmann::json sample_to_json(const Sample& s);

/// Parse one record. `fallback_id` is used when the record has no id.
/// Throws std::invalid_argument on schema violations.
Sample sample_from_json(const nlohmann::json& j, Split split, const std::string& fallback_id);

/// Load a JSONL file. Blank lines are skipped; missing ids become
/// "<split>_<index>" with a 0-based line index. Malformed lines throw
/// MalformedRecord carrying the 1-based line number.
Dataset load_dataset(const std::filesystem::path& path, DatasetSplit split);

/// Write one JSON object per line. A non-validation dataset holding a
/// split=val sample throws ValidationLeak before anything is written.
void write_dataset(const Dataset& ds, const std::filesystem::path& path);

/// train followed by syn; colliding ids throw DuplicateId.
Dataset merge_augmented(const Dataset& train, const Dataset& syn);

/// Seeded uniform selection of min(n, |ds|) samples, original order kept.
Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed);

/// Detects validation ids and validation content in arbitrary text.
///
/// Content matching is substring-based; texts shorter than `min_content_len`
/// are ignored so that short golds such as "B" do not match everything.
class ValidationGuard {
 public:
  ValidationGuard() = default;
  explicit ValidationGuard(const Dataset& val, std::size_t min_content_len = 12);

  bool is_validation_id(std::string_view id) const { return ids_.count(std::string(id)) > 0; }

  /// First leaked id or content found in `text`, if any.
  std::optional<std::string> find_leak(std::string_view text) const;
  bool leaks(std::string_view text) const { return find_leak(text).has_value(); }

  /// Replace every leaked fragment with "[redacted]".
  std::string redact(std::string text) const;

  /// Throws ValidationLeak if the sample is a validation sample or carries a
  /// validation id (own or based_on_example). Synthetic samples are also
  /// scanned for quoted validation content.
  void check(const Sample& s) const;

  const std::vector<std::string>& needles() const { return needles_; }

 private:
  std::unordered_set<std::string> ids_;
  std::vector<std::string> needles_;
};

/// Write a file that will be used as fine-tuning input, enforcing the guard.
void write_training_file(const Dataset& ds, const std::filesystem::path& path, const ValidationGuard& guard);

}  // namespace augflow
