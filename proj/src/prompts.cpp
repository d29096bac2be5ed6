#include "augflow/prompts.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "augflow/errors.hpp"

namespace augflow {

// Generated from assets/prompts by CMake.
const std::vector<std::pair<std::string, std::string>>& builtin_prompt_assets();

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {}

std::string PromptTemplate::render(const std::map<std::string, std::string>& vars) const {
  std::string out;
  out.reserve(text_.size() * 2);
  for (std::size_t i = 0; i < text_.size(); ++i) {
    const char c = text_[i];
    if (c == '{') {
      if (i + 1 < text_.size() && text_[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      const auto close = text_.find('}', i);
      if (close == std::string::npos) throw std::invalid_argument("unterminated placeholder in prompt template");
      const auto name = text_.substr(i + 1, close - i - 1);
      auto it = vars.find(name);
      if (it == vars.end()) throw std::invalid_argument("prompt placeholder {" + name + "} has no value");
      out += it->second;
      i = close;
    } else if (c == '}') {
      if (i + 1 < text_.size() && text_[i + 1] == '}') {
        out.push_back('}');
        ++i;
        continue;
      }
      throw std::invalid_argument("stray '}' in prompt template");
    } else {
      out.push_back(c);
    }
  }
  return out;
}

PromptLibrary PromptLibrary::defaults() {
  PromptLibrary lib;
  for (const auto& [name, text] : builtin_prompt_assets()) lib.templates_.emplace(name, PromptTemplate(text));
  return lib;
}

PromptLibrary PromptLibrary::from_directory(const std::filesystem::path& dir) {
  auto lib = defaults();
  for (auto& [name, tmpl] : lib.templates_) {
    const auto path = dir / (name + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::ostringstream ss;
    ss << in.rdbuf();
    tmpl = PromptTemplate(ss.str());
  }
  return lib;
}

const PromptTemplate& PromptLibrary::get(std::string_view name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw ConfigError("unknown prompt template: " + std::string(name));
  return it->second;
}

}  // namespace augflow
