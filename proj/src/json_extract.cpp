#include "augflow/json_extract.hpp"

#include <optional>
#include <string>

#include "augflow/errors.hpp"

namespace augflow {

using nlohmann::json;

namespace {

std::optional<json> try_parse(std::string_view s) {
  auto j = json::parse(s.begin(), s.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !(j.is_array() || j.is_object())) return std::nullopt;
  return j;
}

/// End offset (exclusive) of the balanced span opening at `start`, honouring
/// string literals and escapes.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      if (--depth == 0) return i + 1;
      if (depth < 0) return std::nullopt;
    }
  }
  return std::nullopt;
}

std::optional<json> scan_spans(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '[' && s[i] != '{') continue;
    if (auto end = balanced_end(s, i)) {
      if (auto j = try_parse(s.substr(i, *end - i))) return j;
    }
  }
  return std::nullopt;
}

}  // namespace

json extract_json(std::string_view raw) {
  // Fenced blocks: ```json ... ``` or ``` ... ```
  for (auto open = raw.find("```"); open != std::string_view::npos;) {
    auto body_start = raw.find('\n', open);
    if (body_start == std::string_view::npos) break;
    ++body_start;
    const auto close = raw.find("```", body_start);
    if (close == std::string_view::npos) break;
    const auto body = raw.substr(body_start, close - body_start);
    if (auto j = try_parse(body)) return *j;
    if (auto j = scan_spans(body)) return *j;
    open = raw.find("```", close + 3);
  }
  if (auto j = scan_spans(raw)) return *j;
  throw MalformedOutput("no parseable JSON in model output: " + std::string(raw.substr(0, 200)));
}

json extract_json_array(std::string_view raw) {
  auto j = extract_json(raw);
  if (j.is_object()) {
    // Some models wrap the array: {"results": [...]}.
    if (j.size() == 1 && j.begin()->is_array()) return *j.begin();
    return json::array({j});
  }
  return j;
}

json extract_json_object(std::string_view raw) {
  auto j = extract_json(raw);
  if (j.is_array()) {
    if (j.size() == 1 && j[0].is_object()) return j[0];
    throw MalformedOutput("expected a JSON object, got an array of " + std::to_string(j.size()));
  }
  return j;
}

}  // namespace augflow
