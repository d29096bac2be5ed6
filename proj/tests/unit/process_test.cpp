#include <gtest/gtest.h>

#include "augflow/errors.hpp"
#include "augflow/process.hpp"

namespace augflow {
namespace {

TEST(SplitCommand, QuotesGroupWords) {
  EXPECT_EQ(split_command(R"(python "my hook.py" --x 'a b'  c)"),
            (std::vector<std::string>{"python", "my hook.py", "--x", "a b", "c"}));
  EXPECT_THROW(split_command("echo 'open"), std::invalid_argument);
}

TEST(ExpandCommand, UnknownPlaceholdersStay) {
  EXPECT_EQ(expand_command("run {a} {b}", {{"a", "1"}}), (std::vector<std::string>{"run", "1", "{b}"}));
}

TEST(RunProcess, CapturesOutputAndExitCode) {
  const auto r = run_process({"sh", "-c", "echo out; echo err >&2; exit 4"});
  EXPECT_EQ(r.exit_code, 4);
  EXPECT_EQ(r.stdout_text, "out\n");
  EXPECT_EQ(r.stderr_text, "err\n");
}

TEST(RunProcess, MissingProgram) {
  try {
    const auto r = run_process({"/nonexistent/augflow-program"});
    EXPECT_NE(r.exit_code, 0);
  } catch (const IoError&) {
  }
}

TEST(Tail, KeepsLastBytes) {
  EXPECT_EQ(tail("abcdef", 3), "def");
  EXPECT_EQ(tail("ab", 3), "ab");
}

}  // namespace
}  // namespace augflow
