#include "augflow/process.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "augflow/errors.hpp"

extern char** environ;

namespace augflow {

std::vector<std::string> split_command(std::string_view command) {
  std::vector<std::string> words;
  std::string cur;
  bool have_word = false;
  char quote = 0;
  for (char c : command) {
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' || c == '\'') {
      quote = c;
      have_word = true;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (have_word) words.push_back(std::move(cur));
      cur.clear();
      have_word = false;
    } else {
      cur.push_back(c);
      have_word = true;
    }
  }
  if (quote) throw std::invalid_argument("unterminated quote in command: " + std::string(command));
  if (have_word) words.push_back(std::move(cur));
  return words;
}

std::vector<std::string> expand_command(std::string_view command, const std::map<std::string, std::string>& vars) {
  auto words = split_command(command);
  for (auto& w : words) {
    for (const auto& [key, value] : vars) {
      const auto needle = "{" + key + "}";
      for (auto pos = w.find(needle); pos != std::string::npos; pos = w.find(needle, pos + value.size())) {
        w.replace(pos, needle.size(), value);
      }
    }
  }
  return words;
}

namespace {

class TempFile {
 public:
  TempFile() {
    char name[] = "/tmp/augflow-procXXXXXX";
    fd_ = ::mkstemp(name);
    if (fd_ < 0) throw IoError(std::string("mkstemp failed: ") + std::strerror(errno));
    path_ = name;
  }
  ~TempFile() {
    ::close(fd_);
    ::unlink(path_.c_str());
  }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;

  int fd() const { return fd_; }
  std::string read() const {
    std::ifstream in(path_, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

 private:
  int fd_ = -1;
  std::string path_;
};

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv) {
  if (argv.empty()) throw std::invalid_argument("empty command");
  TempFile out;
  TempFile err;

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out.fd(), STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err.fd(), STDERR_FILENO);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);

  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  pid_t pid = 0;
  const int rc = ::posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw IoError("cannot start " + argv[0] + ": " + std::strerror(rc));

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw IoError(std::string("waitpid failed: ") + std::strerror(errno));
  }
  ProcessResult r;
  if (WIFEXITED(status)) {
    r.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    r.exit_code = 128 + WTERMSIG(status);
  } else {
    r.exit_code = -1;
  }
  r.stdout_text = out.read();
  r.stderr_text = err.read();
  return r;
}

std::string tail(std::string_view text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return std::string(text);
  return std::string(text.substr(text.size() - max_bytes));
}

}  // namespace augflow
