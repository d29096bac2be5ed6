#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace augflow {

struct ProcessResult {
  int exit_code = 0;  // 128 + signal number when killed by a signal
  std::string stdout_text;
  std::string stderr_text;
};

/// Split a command template into argv words. Whitespace separates words;
/// single or double quotes group. No other shell syntax is interpreted.
std::vector<std::string> split_command(std::string_view command);

/// split_command, then replace `{key}` in every word with vars[key].
/// Placeholders not in `vars` are left untouched.
std::vector<std::string> expand_command(std::string_view command, const std::map<std::string, std::string>& vars);

/// Run argv[0] (PATH lookup) and wait for it. Throws IoError if the process
/// cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv);

/// Last `max_bytes` of `text`.
std::string tail(std::string_view text, std::size_t max_bytes = 2000);

}  // namespace augflow
