#pragma once

#include <string_view>

#include <nlohmann/json.hpp>

namespace augflow {

/// Pull the first JSON array or object out of free-form model output.
///
/// Fenced code blocks are tried first, then every balanced top-level
/// `[...]` / `{...}` span in order of appearance. Throws MalformedOutput
/// when nothing parses.
nlohmann::json extract_json(std::string_view raw);

/// extract_json, then require an array. A lone object is wrapped.
nlohmann::json extract_json_array(std::string_view raw);

/// extract_json, then require an object. A one-element array is unwrapped.
nlohmann::json extract_json_object(std::string_view raw);

}  // namespace augflow
