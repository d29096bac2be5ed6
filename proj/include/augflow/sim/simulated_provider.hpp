#pragma once

#include <string>

#include "augflow/gateway.hpp"

namespace augflow::sim {

/// Offline stand-in for every model role on an integer-arithmetic task.
///
/// Questions look like "What is 34 + 58?" and answers end in "#### <n>".
/// The student answers wrongly with a probability that depends on the
/// operator and falls with the iteration number parsed from its model id
/// ("student-it2"). The analyst, categoriser and strategist recognise the
/// operator behind each error; the generator writes fresh correct problems;
/// the judge checks the arithmetic and is strict on some first attempts.
///
/// Used to record replay fixtures and for offline demos. Pure function of
/// the request.
class SimulatedChatProvider final : public ChatProvider {
 public:
  std::string complete(const ChatRequest& req) override;
};

/// "a op b = c\n#### c" for a question containing "a op b"; empty if none.
std::string solve(const std::string& question);

}  // namespace augflow::sim
