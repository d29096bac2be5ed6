#include "augflow/sim/simulated_provider.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "augflow/providers.hpp"

namespace augflow::sim {

using nlohmann::json;

namespace {

struct Expr {
  long long a = 0;
  char op = '+';
  long long b = 0;

  long long value() const {
    switch (op) {
      case '-':
        return a - b;
      case '*':
        return a * b;
      default:
        return a + b;
    }
  }
};

std::optional<Expr> find_expr(const std::string& text) {
  static const std::regex re(R"((\d+)\s*([-+*])\s*(\d+))");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  return Expr{std::stoll(m[1]), m[2].str()[0], std::stoll(m[3])};
}

std::string render(const Expr& e, long long result) {
  std::ostringstream os;
  os << e.a << ' ' << e.op << ' ' << e.b << " = " << result << "\n#### " << result;
  return os.str();
}

int level_of(const std::string& model_id) {
  std::size_t i = model_id.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(model_id[i - 1]))) --i;
  return i == model_id.size() ? 0 : std::stoi(model_id.substr(i));
}

double unit(std::string_view key) { return static_cast<double>(fnv1a64(key) % 10000) / 10000.0; }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> out;
  for (const auto& line : lines_of(text)) {
    if (line.rfind("{\"", 0) != 0) continue;
    auto j = json::parse(line, nullptr, false);
    if (!j.is_discarded()) out.push_back(std::move(j));
  }
  return out;
}

std::string fenced(const json& j) { return "Here is the result:\n```json\n" + j.dump(2) + "\n```\n"; }

struct Family {
  char op;
  std::string scenario;
  std::vector<std::string> causes;
  std::string category;
  std::string pattern;
  std::string strategy;
  std::string approach;
  std::vector<std::string> key_elements;
  std::string topic;
};

const std::vector<Family>& families() {
  static const std::vector<Family> f = {
      {'+',
       "Multi-digit addition with carrying",
       {"Dropped the carry when a column sum exceeded nine"},
       "Carry Propagation Errors",
       "Carries are dropped or misplaced when a column sum exceeds nine in multi-digit addition",
       "Carry Chain Drills",
       "Generate addition problems where at least one column sum exceeds nine and show the carried digit before "
       "the final answer line",
       {"column sums above nine", "explicit carry step", "final answer after ####"},
       "addition"},
      {'-',
       "Multi-digit subtraction with borrowing",
       {"Did not borrow from the next column when the top digit was smaller"},
       "Borrowing Errors in Subtraction",
       "Borrowing is skipped when the upper digit of a column is smaller than the lower digit",
       "Borrow Across Columns",
       "Generate subtraction problems with at least one column that needs a borrow and state the borrow before "
       "the final answer line",
       {"columns that need a borrow", "explicit borrow step", "final answer after ####"},
       "subtraction"},
      {'*',
       "Multi-digit multiplication",
       {"Omitted one partial product in long multiplication"},
       "Partial Product Errors",
       "Partial products are dropped or shifted to the wrong place value in long multiplication",
       "Partial Product Walkthroughs",
       "Generate multiplication problems with a two-digit factor and list every partial product before the final "
       "answer line",
       {"two-digit factors", "each partial product", "final answer after ####"},
       "multiplication"},
  };
  return f;
}

const Family* family_for_op(char op) {
  for (const auto& f : families()) {
    if (f.op == op) return &f;
  }
  return nullptr;
}

const Family* family_matching(const std::string& text) {
  for (const auto& f : families()) {
    if (text.find(f.scenario) != std::string::npos || text.find(f.category) != std::string::npos ||
        text.find(f.strategy) != std::string::npos || text.find(f.topic) != std::string::npos) {
      return &f;
    }
  }
  return nullptr;
}

// Student: right or wrong depending on a per-question draw.
std::string student(const ChatRequest& req) {
  const auto& q = req.messages.back().content;
  const auto e = find_expr(q);
  if (!e) return "I am not sure.";
  static const std::map<char, double> base = {{'+', 0.35}, {'-', 0.5}, {'*', 0.7}};
  const double rate = base.at(e->op) / (1.0 + level_of(req.model_id));
  long long result = e->value();
  if (unit(req.model_id + "|" + q) < rate) {
    switch (e->op) {
      case '+':
        result -= 10;
        break;
      case '-':
        result += 10;
        break;
      default:
        result -= e->a;
        break;
    }
  }
  return render(*e, result);
}

std::string analyst(const std::string& prompt) {
  static const std::regex re(R"(SAMPLE (\d+):\nUSER QUERY: ([^\n]*)\n)");
  json out = json::array();
  for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), re); it != std::sregex_iterator(); ++it) {
    const auto query = (*it)[2].str();
    const auto e = find_expr(query);
    const Family* f = e ? family_for_op(e->op) : nullptr;
    if (!f) continue;
    const auto cause = f->causes[fnv1a64(query) % f->causes.size()] + " (operands " + std::to_string(e->a) + " and " +
                       std::to_string(e->b) + ")";
    out.push_back({{"sample_idx", std::stoi((*it)[1])}, {"error_cause", cause}, {"scenario_category", f->scenario}});
  }
  return fenced(out);
}

std::string categoriser(const std::string& prompt) {
  std::map<std::string, int> votes;
  std::vector<std::string> queries;
  for (const auto& line : lines_of(prompt)) {
    if (line.rfind("SCENARIO CATEGORY: ", 0) == 0) ++votes[line.substr(19)];
    if (line.rfind("USER QUERY: ", 0) == 0 && queries.size() < 2) queries.push_back(line.substr(12));
  }
  std::string top;
  int best = 0;
  for (const auto& [name, n] : votes) {
    if (n > best) top = name, best = n;
  }
  const Family* f = family_matching(top);
  json out;
  if (f) {
    out = {{"category_name", f->category}, {"error_pattern", f->pattern}, {"representative_samples", queries}};
  } else {
    out = {{"category_name", "Miscellaneous Arithmetic Errors"},
           {"error_pattern", "Arithmetic slips without a shared structure"},
           {"representative_samples", queries}};
  }
  return fenced(out);
}

std::string strategist(const std::string& prompt) {
  static const std::regex re(R"(CATEGORY \d+: ([^\n]*)\n)");
  json out = json::array();
  for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), re); it != std::sregex_iterator(); ++it) {
    const auto name = (*it)[1].str();
    if (const Family* f = family_matching(name)) {
      out.push_back({{"category_name", name},
                     {"strategy_name", f->strategy},
                     {"generation_approach", f->approach},
                     {"key_elements", f->key_elements}});
    } else {
      out.push_back({{"category_name", name},
                     {"strategy_name", "Mixed Arithmetic Review"},
                     {"generation_approach", "Generate mixed arithmetic problems with worked answers"},
                     {"key_elements", {"varied operators", "final answer after ####"}}});
    }
  }
  return fenced(out);
}

Expr fresh_problem(char op, std::uint64_t h) {
  Expr e;
  e.op = op;
  if (op == '*') {
    e.a = 11 + static_cast<long long>(h % 39);
    e.b = 2 + static_cast<long long>((h >> 16) % 8);
  } else {
    e.a = 10 + static_cast<long long>(h % 90);
    e.b = 10 + static_cast<long long>((h >> 16) % 90);
    if (op == '-' && e.a < e.b) std::swap(e.a, e.b);
  }
  return e;
}

json one_turn(const Expr& e) {
  std::ostringstream q;
  q << "Calculate " << e.a << ' ' << e.op << ' ' << e.b << '.';
  return json::array({{{"role", "user"}, {"content", q.str()}}, {{"role", "assistant"}, {"content", render(e, e.value())}}});
}

std::string generator(const std::string& prompt) {
  const auto salt = fnv1a64(prompt);
  json out = json::array();
  if (prompt.find("IMPROVEMENT STRATEGY:") != std::string::npos) {
    static const std::regex per_re(R"(generate (\d+) synthetic samples)");
    static const std::regex name_re("\"based_on_strategy\": \"([^\"]*)\"");
    std::smatch m;
    const int per = std::regex_search(prompt, m, per_re) ? std::stoi(m[1]) : 1;
    const auto strategy = std::regex_search(prompt, m, name_re) ? m[1].str() : std::string{};
    const auto head = prompt.substr(0, prompt.find("ORIGINAL EXAMPLES"));
    const Family* f = family_matching(head);
    int n = 0;
    for (const auto& ex : json_lines(prompt)) {
      const auto id = ex.value("sample_id", std::string{});
      char op = f ? f->op : '+';
      for (int j = 0; j < per; ++j, ++n) {
        const auto e = fresh_problem(op, fnv1a64(id + "|" + std::to_string(j), salt));
        out.push_back({{"sample_id", "synthetic_" + std::to_string(n)},
                       {"is_synthetic", true},
                       {"based_on_strategy", strategy},
                       {"based_on_example", id},
                       {"messages", one_turn(e)}});
      }
    }
    return fenced(out);
  }
  if (prompt.find("training error examples") != std::string::npos) {
    static const std::regex total_re(R"(Please generate (\d+) new samples)");
    static const std::regex ex_re(R"(QUESTION/TASK:\n([^\n]*)\n)");
    std::smatch m;
    const int total = std::regex_search(prompt, m, total_re) ? std::stoi(m[1]) : 0;
    std::vector<char> ops;
    for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), ex_re); it != std::sregex_iterator(); ++it) {
      const auto e = find_expr((*it)[1].str());
      ops.push_back(e ? e->op : '+');
    }
    if (ops.empty()) ops.push_back('+');
    for (int j = 0; j < total; ++j) {
      const auto e = fresh_problem(ops[j % ops.size()], fnv1a64(std::to_string(j), salt));
      out.push_back({{"sample_id", "synthetic_" + std::to_string(j)}, {"is_synthetic", true}, {"messages", one_turn(e)}});
    }
    // Occasionally a sample breaks the one-turn format.
    if (salt % 4 == 0) {
      out.push_back({{"sample_id", "synthetic_extra"},
                     {"is_synthetic", true},
                     {"messages",
                      json::array({{{"role", "user"}, {"content", "Calculate 1 + 1."}},
                                   {{"role", "user"}, {"content", "And 2 + 2?"}},
                                   {{"role", "assistant"}, {"content", "#### 4"}}})}});
    }
    return fenced(out);
  }
  return "I cannot help with that.";
}

std::string judge(const std::string& prompt) {
  static const std::regex id_re(R"(^(.*)-a(\d+)-\d+$)");
  json out = json::array();
  for (const auto& entry : json_lines(prompt)) {
    const auto id = entry.value("sample_id", std::string{});
    if (entry.value("type", std::string{}) != "synthetic") {
      out.push_back({{"sample_id", id}, {"type", "original"}, {"feedback", "Reference sample."}});
      continue;
    }
    const auto& msgs = entry.at("messages");
    const auto q = msgs.at(0).value("content", std::string{});
    const auto a = msgs.at(1).value("content", std::string{});
    std::smatch m;
    std::string batch = id;
    int attempt = 1;
    if (std::regex_match(id, m, id_re)) batch = m[1], attempt = std::stoi(m[2]);
    const auto h = fnv1a64(batch);
    int rating = 8 + static_cast<int>(fnv1a64(id) % 2);
    std::string feedback = "Correct and on target.";
    if (solve(q) != a) {
      rating = 2;
      feedback = "The worked answer is wrong.";
    } else if (h % 5 == 0) {
      rating = 6;
      feedback = "Operands are too close to the original; use larger and more varied numbers.";
    } else if (h % 5 <= 2 && attempt == 1) {
      rating = 6;
      feedback = "Show the intermediate step explicitly.";
    }
    out.push_back({{"sample_id", id}, {"type", "synthetic"}, {"quality_rating", rating}, {"feedback", feedback}});
  }
  return fenced(out);
}

}  // namespace

std::string solve(const std::string& question) {
  const auto e = find_expr(question);
  return e ? render(*e, e->value()) : std::string{};
}

std::string SimulatedChatProvider::complete(const ChatRequest& req) {
  const std::string& prompt = req.messages.empty() ? std::string{} : req.messages.back().content;
  switch (req.purpose) {
    case Purpose::student_eval:
      return student(req);
    case Purpose::error_analysis:
      return analyst(prompt);
    case Purpose::categorization:
      return categoriser(prompt);
    case Purpose::strategy:
      return strategist(prompt);
    case Purpose::generation:
      return generator(prompt);
    case Purpose::quality_control:
      return judge(prompt);
  }
  return {};
}

}  // namespace augflow::sim
