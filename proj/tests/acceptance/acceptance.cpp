// Acceptance checks for the orchestrator. Prints one PASS/FAIL line per
// criterion and exits non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "augflow/clustering.hpp"
#include "augflow/errors.hpp"
#include "augflow/evaluator.hpp"
#include "augflow/generation.hpp"
#include "augflow/orchestrator.hpp"
#include "augflow/process.hpp"
#include "augflow/quality.hpp"
#include "oracles.hpp"
#include "scripted_judge.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using namespace augflow;
using augflow::testing::read_file;
using augflow::testing::ScriptedProvider;
using augflow::testing::temp_dir;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

/// Collects failure notes for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  bool ok() const { return failures_.empty(); }
  std::string summary() const {
    std::string s;
    for (std::size_t i = 0; i < failures_.size() && i < 5; ++i) s += (i ? "; " : "") + failures_[i];
    if (failures_.size() > 5) s += "; ... " + std::to_string(failures_.size() - 5) + " more";
    return s;
  }

 private:
  std::vector<std::string> failures_;
};

int failed = 0;

void report(const std::string& name, const Check& c, const std::string& detail) {
  std::cout << (c.ok() ? "PASS " : "FAIL ") << name << ": " << (c.ok() ? detail : c.summary()) << std::endl;
  if (!c.ok()) ++failed;
}

/// Runs a criterion, turning an escaped exception into a failure.
void criterion(const std::string& name, const std::function<std::string(Check&)>& body) {
  Check c;
  std::string detail;
  try {
    detail = body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  report(name, c, detail);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

// ---------------------------------------------------------------------------
// Probed library run shared by several criteria.

struct ProbedRequest {
  Purpose purpose;
  double temperature;
  std::string prompt;
  int iteration;
};

/// Records every request that reaches a provider, tagged with the iteration
/// in progress.
struct Probe {
  std::mutex mu;
  std::vector<ProbedRequest> requests;
  int iteration = 0;
};

class ProbeProvider final : public ChatProvider {
 public:
  ProbeProvider(std::shared_ptr<ChatProvider> inner, Probe& probe) : inner_(std::move(inner)), probe_(probe) {}
  std::string complete(const ChatRequest& req) override {
    {
      std::lock_guard lock(probe_.mu);
      probe_.requests.push_back({req.purpose, req.temperature, req.messages.back().content, probe_.iteration});
    }
    return inner_->complete(req);
  }

 private:
  std::shared_ptr<ChatProvider> inner_;
  Probe& probe_;
};

struct ProbedRun {
  fs::path work_dir;
  RunConfig cfg;
  Probe probe;
  PipelineState state;
  json report;
  Dataset val;
  std::size_t train_size = 0;
};

void run_probed(ProbedRun& run) {
  run.work_dir = temp_dir("acceptance-probed");
  run.cfg = augflow::testing::arith_config(run.work_dir, 2);
  auto base = default_provider_factory(run.cfg);
  Orchestrator orch(run.cfg, [&](Purpose p, const ProviderSpec& spec) -> std::shared_ptr<ChatProvider> {
    return std::make_shared<ProbeProvider>(base(p, spec), run.probe);
  });
  run.val = orch.val();
  run.train_size = orch.train().size();
  run.state = orch.initial_state();
  orch.initial_finetune(run.state);
  for (int i = 1; i <= run.cfg.max_iterations; ++i) {
    run.probe.iteration = i;
    orch.run_iteration(run.state);
  }
  run.report = orch.emit_report(run.state);
}

// ---------------------------------------------------------------------------

std::string algorithm_conformance(Check& c) {
  const auto cli = fs::path(AUGFLOW_CLI_PATH);
  const auto config = augflow::testing::kFixtureDir / "arith" / "run.json";
  const std::vector<std::string> stages = {"evaluate_train",   "evaluate_val",    "subsample_val_errors",
                                           "analyze_errors",   "cluster",         "categorize_patterns",
                                           "draft_strategies", "plan_quota",      "generate_pattern",
                                           "generate_error",   "quality_control", "merge",
                                           "finetune"};
  std::vector<std::string> reports;
  double slowest = 0;
  for (int run = 0; run < 2; ++run) {
    const auto work = temp_dir("acceptance-cli");
    const auto t0 = Clock::now();
    const auto res = run_process({cli.string(), "run", "--config", config.string(), "--dry-run", "--quiet",
                                  "--max-iterations", "2", "--work-dir", work.string()});
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);
    c.expect(res.exit_code == 0, "run " + std::to_string(run) + " exited " + std::to_string(res.exit_code) + ": " +
                                     tail(res.stderr_text + res.stdout_text, 300));
    if (res.exit_code != 0) return "";
    c.expect(secs < 30.0, "runtime " + std::to_string(secs) + " s");

    const auto hook_log = lines_of(read_file(work / "hook_calls.log"));
    c.expect(hook_log.size() == 3, "hook_calls.log has " + std::to_string(hook_log.size()) + " lines");
    for (std::size_t i = 0; i < hook_log.size(); ++i) {
      c.expect(hook_log[i].rfind(std::to_string(i) + " ", 0) == 0, "hook call " + std::to_string(i) + " was \"" +
                                                                        hook_log[i] + "\"");
    }

    reports.push_back(read_file(work / "report.json"));
    const auto rep = json::parse(reports.back());
    c.expect(rep["hook_calls"] == 3, "report hook_calls " + rep["hook_calls"].dump());
    c.expect(rep["iterations"].size() == 2, "report has " + std::to_string(rep["iterations"].size()) + " iterations");
    std::size_t prev = rep["initial_finetune"]["seq"].get<std::size_t>();
    c.expect(rep["initial_finetune"]["name"] == "finetune", "initial fine-tune missing");
    std::size_t expected_lines = 40;
    for (std::size_t i = 0; i < rep["iterations"].size(); ++i) {
      const auto& it = rep["iterations"][i];
      std::vector<std::string> names;
      std::map<std::string, std::size_t> produced;
      for (const auto& m : it["stages"]) {
        names.push_back(m["name"]);
        const auto seq = m["seq"].get<std::size_t>();
        c.expect(seq > prev, "stage " + m["name"].get<std::string>() + " out of order");
        prev = seq;
        for (const auto& in : m["inputs"]) {
          auto p = produced.find(in.get<std::string>());
          c.expect(p == produced.end() || p->second < seq, "stage reads a later artifact");
        }
        for (const auto& out : m["outputs"]) produced[out.get<std::string>()] = seq;
      }
      c.expect(names == stages, "iteration " + std::to_string(i + 1) + " stage sequence differs");
      // The fine-tune of iteration i consumed the merged set written in iteration i.
      expected_lines += it["qc_stats"]["accepted_samples"].get<std::size_t>();
      if (i + 1 < hook_log.size()) {
        c.expect(hook_log[i + 1] == std::to_string(i + 1) + " " + std::to_string(expected_lines),
                 "hook " + std::to_string(i + 1) + " trained on \"" + hook_log[i + 1] + "\", expected " +
                     std::to_string(expected_lines) + " lines");
      }
    }
  }
  c.expect(reports.size() == 2 && reports[0] == reports[1], "reports differ between runs");
  return "2 iterations x 13 stages in order, 3 hook calls, byte-identical reports, slowest run " +
         std::to_string(slowest).substr(0, 5) + " s";
}

std::string call_accounting(Check& c, const ProbedRun& run) {
  std::string detail;
  for (const auto& ctx : run.state.iterations) {
    std::map<Purpose, std::size_t> probe;
    for (const auto& r : run.probe.requests)
      if (r.iteration == ctx.iteration) ++probe[r.purpose];
    const std::size_t k = ctx.clustering ? ctx.clustering->clusters.k : 0;
    const auto tag = "iteration " + std::to_string(ctx.iteration);
    c.expect(k > 0, tag + " has no clusters");
    c.expect(probe[Purpose::categorization] == k,
             tag + ": " + std::to_string(probe[Purpose::categorization]) + " categorization calls for K=" + std::to_string(k));
    c.expect(probe[Purpose::strategy] == 1, tag + ": " + std::to_string(probe[Purpose::strategy]) + " strategy calls");

    const auto& rep = run.report["iterations"][static_cast<std::size_t>(ctx.iteration - 1)];
    c.expect(rep["K"] == k, tag + ": report K differs");
    for (auto p : kAllPurposes) {
      const auto name = std::string(to_string(p));
      const auto reported = rep["calls"][name]["attempts"].get<std::size_t>();
      c.expect(reported == probe[p], tag + " " + name + ": report " + std::to_string(reported) + " vs probe " +
                                         std::to_string(probe[p]));
    }
    detail += (detail.empty() ? "" : ", ") + tag + " K=" + std::to_string(k) + " categorization=" +
              std::to_string(probe[Purpose::categorization]) + " strategy=" + std::to_string(probe[Purpose::strategy]);
  }
  return detail;
}

std::string clustering_oracle(Check& c) {
  const auto t0 = Clock::now();
  const auto pts = oracle::three_blobs();
  c.expect(pts.size() == 60, "fixture size");

  const auto k = select_k_elbow(pts, 2, 10, 0);
  c.expect(k == 3, "select_k_elbow returned " + std::to_string(k));

  std::vector<std::size_t> ks;
  std::vector<double> oracle_w;
  for (std::size_t kk = 2; kk <= 10; ++kk) {
    ks.push_back(kk);
    oracle_w.push_back(oracle::lloyd_restarts(pts, kk, 40, 500 + kk));
  }
  c.expect(oracle::chord_knee(ks, oracle_w) == 3, "oracle curve knee is not 3");

  std::vector<std::size_t> blob(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) blob[i] = i / 20;
  const double blob_w = oracle::partition_wcss(pts, blob, 3);
  const double lib3 = kmeans(pts, 3, 0).wcss;
  const double lib2 = kmeans(pts, 2, 0).wcss;
  c.expect(std::fabs(lib3 - oracle_w[1]) <= 1e-9, "k=3 WCSS " + std::to_string(lib3) + " vs oracle " + std::to_string(oracle_w[1]));
  c.expect(std::fabs(lib3 - blob_w) <= 1e-9, "k=3 WCSS differs from the blob partition");
  c.expect(std::fabs(lib2 - oracle_w[0]) <= 1e-9, "k=2 WCSS " + std::to_string(lib2) + " vs oracle " + std::to_string(oracle_w[0]));

  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = kmeans_once(pts, 2 + seed % 9, seed);
    bool ok = !r.wcss_history.empty();
    for (std::size_t i = 1; i < r.wcss_history.size(); ++i) ok = ok && r.wcss_history[i] <= r.wcss_history[i - 1];
    monotone += ok;
  }
  c.expect(monotone == 100, "monotone in " + std::to_string(monotone) + "/100 runs");
  const double secs = seconds_since(t0);
  c.expect(secs < 5.0, "runtime " + std::to_string(secs) + " s");
  return "K=3, |WCSS - oracle| <= 1e-9 at k=2,3, monotone 100/100, " + std::to_string(secs).substr(0, 5) + " s";
}

std::string quota_law(Check& c) {
  const auto q = plan_quota(1000, 4, 10, 0.5);
  c.expect(q.total == 500, "total " + std::to_string(q.total));
  c.expect(q.per_strategy == std::vector<std::size_t>({63, 63, 62, 62}), "per_strategy differs");
  c.expect(q.pattern_total == 250 && q.error_total == 250, "branch split differs");

  oracle::SplitMix rng(8);
  int trials = 0;
  for (; trials < 5000; ++trials) {
    const auto train = rng.next() % 20000;
    const auto k = 1 + rng.next() % 10;
    const auto errors = rng.next() % 3 == 0 ? 0 : 1 + rng.next() % 500;
    const auto p = plan_quota(train, k, errors, 0.5);
    const auto sum = std::accumulate(p.per_strategy.begin(), p.per_strategy.end(), std::size_t{0});
    const auto [lo, hi] = std::minmax_element(p.per_strategy.begin(), p.per_strategy.end());
    const std::size_t expected_total = (train + 1) / 2;  // round-half-up of train/2
    if (p.total != expected_total || sum != p.pattern_total || p.total != p.pattern_total + p.error_total ||
        *hi - *lo > 1 || p.per_strategy.size() != k || (errors == 0 && p.error_total != 0)) {
      c.expect(false, "violated for train=" + std::to_string(train) + " K=" + std::to_string(k));
      break;
    }
  }
  return "500 -> [63,63,62,62]; " + std::to_string(trials) + " random (train_size, K) cases hold sum and spread";
}

std::string qc_gate_law(Check& c, const ProbedRun& run) {
  const auto prompts = PromptLibrary::defaults();
  Gateway gateway;
  const std::vector<std::vector<int>> script = {{6}, {7, 6}, {7, 7, 7, 7, 7, 7, 7, 7, 7, 6}};  // 6.0, 6.5, 6.9
  int judge_calls = 0;
  auto judge = std::make_shared<ScriptedProvider>([&](const ChatRequest& r) {
    const auto i = static_cast<std::size_t>(judge_calls++);
    return augflow::testing::judge_answer(r.messages.back().content, script.at(std::min(i, script.size() - 1)),
                                          "attempt " + std::to_string(i + 1) + " note");
  });
  auto generator = std::make_shared<ScriptedProvider>([](const ChatRequest&) {
    json arr = json::array();
    for (int i = 0; i < 10; ++i) {
      arr.push_back({{"messages",
                      {{{"role", "user"}, {"content", "What is " + std::to_string(i) + " + 5?"}},
                       {{"role", "assistant"}, {"content", "#### " + std::to_string(i + 5)}}}},
                     {"based_on_example", "train_0"}});
    }
    return arr.dump();
  });
  augflow::testing::bind_all(gateway, generator);
  gateway.bind(Purpose::quality_control, augflow::testing::test_binding("judge"), judge);

  const auto original = make_sample("train_0", "What is 1 + 5?", "#### 6");
  auto lookup = [&](const std::string& id) -> const Sample* { return id == original.id ? &original : nullptr; };
  GenerationAgent gen(gateway, prompts);
  QualityAgent qa(gateway, prompts);
  GenerationBatch batch;
  batch.batch_id = "gate";
  batch.branch = Branch::pattern;
  batch.strategy = StrategyCard{"Carry Errors", "p", {}, "Carry Chain Drills", "Generate carries", {}, 0};
  batch.seed_samples = {original};
  batch.requested = 10;
  auto producer = [&](const GenerationBatch& b) { return gen.generate(b); };

  const auto dropped = qc_gate(producer, batch, qa, lookup);
  c.expect(dropped.dropped, "6.0/6.5/6.9 batch not dropped");
  c.expect(dropped.history.size() == 3, "history has " + std::to_string(dropped.history.size()) + " entries");
  if (dropped.history.size() == 3) {
    c.expect(dropped.history[0].batch_score == 6.0 && dropped.history[1].batch_score == 6.5 &&
                 dropped.history[2].batch_score == 6.9,
             "scores differ from 6.0, 6.5, 6.9");
  }
  const auto gen_prompts = generator->seen();
  c.expect(gen_prompts.size() == 3, std::to_string(gen_prompts.size()) + " generation attempts");
  for (std::size_t t = 1; t < gen_prompts.size() && t < dropped.history.size() + 1; ++t) {
    const auto& prompt = gen_prompts[t].messages.back().content;
    const auto& fb = dropped.history[t - 1].feedback;
    c.expect(!fb.empty() && prompt.find(fb) != std::string::npos,
             "attempt " + std::to_string(t + 1) + " prompt lacks attempt " + std::to_string(t) + " feedback");
  }

  judge_calls = 0;
  Gateway g2;
  augflow::testing::bind_all(g2, generator);
  g2.bind(Purpose::quality_control, augflow::testing::test_binding("judge"),
          std::make_shared<ScriptedProvider>(
              [](const ChatRequest& r) { return augflow::testing::judge_answer(r.messages.back().content, {8}); }));
  GenerationAgent gen2(g2, prompts);
  QualityAgent qa2(g2, prompts);
  const auto accepted = qc_gate([&](const GenerationBatch& b) { return gen2.generate(b); }, batch, qa2, lookup);
  c.expect(!accepted.dropped && accepted.history.size() == 1 && accepted.history[0].batch_score == 8.0,
           "8.0 batch not accepted on attempt 1");

  // Post-run scan of every verdict in the probed fixture run.
  std::size_t verdicts = 0, accepted_batches = 0;
  for (const auto& it : run.report["iterations"]) {
    for (const auto& b : it["batches"]) {
      const auto& attempts = b["attempts"];
      c.expect(attempts.size() <= 3, "batch with " + std::to_string(attempts.size()) + " attempts");
      for (const auto& a : attempts) {
        ++verdicts;
        const double score = a["batch_score"].get<double>();
        if (a["accepted"].get<bool>()) c.expect(score >= 7.0, b["batch_id"].get<std::string>() + " accepted at " + std::to_string(score));
        if (!a["accepted"].get<bool>() && a["produced"].get<std::size_t>() > 0 && a["flags"].empty()) {
          c.expect(score < 7.0, b["batch_id"].get<std::string>() + " rejected at " + std::to_string(score));
        }
      }
      if (!b["dropped"].get<bool>()) {
        ++accepted_batches;
        c.expect(!attempts.empty() && attempts.back()["accepted"].get<bool>(), "kept batch without an accepting verdict");
      }
    }
  }
  c.expect(verdicts > 0, "fixture run produced no verdicts");
  return "dropped after 3 attempts with chained feedback, 8.0 accepted on attempt 1, " + std::to_string(verdicts) +
         " run verdicts scanned (" + std::to_string(accepted_batches) + " accepted batches, none below 7)";
}

std::string validation_isolation(Check& c, const ProbedRun& run) {
  std::vector<std::string> needles;
  for (const auto& s : run.val.samples) {
    needles.push_back(s.id);
    needles.push_back(s.query());
    needles.push_back(s.answer());
  }
  auto scan = [&](const std::string& text, const std::string& where) {
    for (const auto& n : needles) {
      if (text.find(n) != std::string::npos) {
        c.expect(false, where + " contains \"" + n.substr(0, 40) + "\"");
        return;
      }
    }
  };

  std::size_t prompts = 0;
  for (const auto& r : run.probe.requests) {
    if (r.purpose != Purpose::generation) continue;
    ++prompts;
    scan(r.prompt, "generation prompt");
  }
  std::size_t files = 0, records = 0;
  for (const auto& ctx : run.state.iterations) {
    for (const auto& rel : {ctx.merged_train_file, ctx.synthetic_file}) {
      const auto path = run.work_dir / rel;
      const auto text = read_file(path);
      ++files;
      scan(text, rel);
      for (const auto& line : lines_of(text)) {
        ++records;
        const auto j = json::parse(line);
        for (const auto& m : j["messages"]) scan(m["content"].get<std::string>(), rel);
        if (j.contains("based_on_example")) scan(j["based_on_example"].get<std::string>(), rel + " provenance");
      }
    }
  }
  c.expect(prompts > 0, "no generation prompts captured");
  c.expect(files == 2 * run.state.iterations.size(), "missing output files");
  return std::to_string(prompts) + " generation prompts and " + std::to_string(records) + " records in " +
         std::to_string(files) + " training files free of " + std::to_string(run.val.size()) + " validation samples";
}

// Evaluator oracle: scripted student over 50 samples per task kind, scored
// with comparison rules written independently of the library.

std::optional<std::string> oracle_choice(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch < 'A' || ch > 'D') continue;
    const bool left = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
    const bool right = i + 1 == text.size() || !std::isalnum(static_cast<unsigned char>(text[i + 1]));
    if (left && right) return std::string(1, ch);
  }
  return std::nullopt;
}

std::optional<double> oracle_number(const std::string& text) {
  auto numbers_in = [](const std::string& s) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < s.size()) {
      const bool neg = s[i] == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
      if (!std::isdigit(static_cast<unsigned char>(s[i])) && !neg) {
        ++i;
        continue;
      }
      std::string digits = neg ? "-" : "";
      if (neg) ++i;
      while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == ',')) {
        if (s[i] != ',') digits += s[i];
        ++i;
      }
      if (i + 1 < s.size() && s[i] == '.' && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
        digits += s[i++];
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) digits += s[i++];
      }
      out.push_back(std::stod(digits));
    }
    return out;
  };
  const auto marker = text.rfind("####");
  if (marker != std::string::npos) {
    const auto after = numbers_in(text.substr(marker + 4));
    if (!after.empty()) return after.front();
  }
  const auto all = numbers_in(text);
  if (all.empty()) return std::nullopt;
  return all.back();
}

std::string oracle_em(const std::string& text) {
  std::string kept;
  for (char ch : text) {
    if (std::ispunct(static_cast<unsigned char>(ch))) continue;
    kept += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  std::istringstream words(kept);
  std::string out;
  for (std::string w; words >> w;) {
    if (w == "a" || w == "an" || w == "the") continue;
    out += (out.empty() ? "" : " ") + w;
  }
  return out;
}

bool oracle_fails(const std::string& pred, const std::string& gold, TaskKind kind) {
  if (pred == kNoResponse) return true;
  switch (kind) {
    case TaskKind::multiple_choice: {
      const auto p = oracle_choice(pred), g = oracle_choice(gold);
      return !p || !g || *p != *g;
    }
    case TaskKind::numeric: {
      const auto p = oracle_number(pred), g = oracle_number(gold);
      return !p || !g || *p != *g;
    }
    default: {
      const auto p = oracle_em(pred), g = oracle_em(gold);
      return p.empty() || g.empty() || p != g;
    }
  }
}

struct ScriptedCase {
  Sample sample;
  std::string prediction;
};

std::vector<ScriptedCase> scripted_fixture(TaskKind kind) {
  oracle::SplitMix rng(static_cast<std::uint64_t>(kind) + 17);
  const std::vector<std::string> things = {"Eiffel Tower", "Grand Canyon", "Pacific Ocean", "Mount Everest",
                                           "Nile River",   "Sahara",       "Great Wall",    "Amazon"};
  std::vector<ScriptedCase> out;
  for (int i = 0; i < 50; ++i) {
    const auto id = "e" + std::to_string(i);
    const auto form = rng.next() % 6;
    std::string gold, pred;
    if (kind == TaskKind::multiple_choice) {
      const char g = static_cast<char>('A' + rng.next() % 4);
      const char other = static_cast<char>('A' + (g - 'A' + 1 + rng.next() % 3) % 4);
      gold = std::string(1, g);
      const std::string forms[] = {"The answer is " + gold + " because of the text.", std::string(1, other),
                                   "(" + gold + ") is right; " + std::string(1, other) + " is not.",
                                   "Answer: " + std::string(1, other) + ". Not " + gold + ".",
                                   "I do not know.", gold};
      pred = forms[form];
    } else if (kind == TaskKind::numeric) {
      const long n = static_cast<long>(rng.next() % 3000) - 500;
      gold = "step one\n#### " + std::to_string(n);
      const std::string forms[] = {"#### " + std::to_string(n), "#### " + std::to_string(n + 1),
                                   "so the total is " + std::to_string(n), "first 12, then 7\n#### " + std::to_string(n) + ".0",
                                   "no idea", "#### " + std::to_string(n) + "\nor maybe " + std::to_string(n - 3)};
      pred = forms[form];
    } else {
      const auto& t = things[rng.next() % things.size()];
      const auto& o = things[(rng.next() % (things.size() - 1) + 1 + (&t - things.data())) % things.size()];
      gold = t;
      std::string lower = t;
      for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      const std::string forms[] = {"The " + t + ".", o, "  " + lower + "!! ", "An " + o + ",", "the", "A " + t};
      pred = forms[form];
    }
    out.push_back({make_sample(id, "Question " + id, gold), i % 17 == 5 ? "" : pred});
  }
  return out;
}

std::string evaluator_oracle(Check& c) {
  std::string detail;
  for (auto kind : {TaskKind::multiple_choice, TaskKind::numeric, TaskKind::exact_match}) {
    TaskSpec task;
    task.kind = kind;
    if (kind == TaskKind::multiple_choice) task.choice_labels = {"A", "B", "C", "D"};
    if (kind == TaskKind::numeric) task.numeric_marker = "####";
    const auto cases = scripted_fixture(kind);
    Dataset ds;
    std::map<std::string, std::string> answers;
    for (const auto& sc : cases) {
      ds.samples.push_back(sc.sample);
      answers[sc.sample.query()] = sc.prediction;
    }
    // Empty script entries stand for a student that never answers.
    auto student = std::make_shared<ScriptedProvider>([&](const ChatRequest& r) -> std::string {
      const auto& a = answers.at(r.messages.back().content);
      if (a.empty()) throw ProviderRejected(400, "scripted refusal");
      return a;
    });
    Gateway g;
    g.bind(Purpose::student_eval, augflow::testing::test_binding("student"), student);
    const auto errors = collect_errors(ds, predict_all(ds, g), task);

    std::vector<std::string> expected;
    for (const auto& sc : cases) {
      const auto pred = sc.prediction.empty() ? std::string(kNoResponse) : sc.prediction;
      if (oracle_fails(pred, sc.sample.answer(), kind)) expected.push_back(sc.sample.id);
    }
    std::vector<std::string> got;
    for (const auto& e : errors) got.push_back(e.sample_id);
    c.expect(got == expected, std::string(to_string(kind)) + ": library " + std::to_string(got.size()) +
                                  " errors vs recount " + std::to_string(expected.size()));
    detail += (detail.empty() ? "" : ", ") + std::string(to_string(kind)) + " " + std::to_string(got.size()) + "/50";
  }

  const std::vector<std::pair<std::string, std::string>> same = {
      {"The Eiffel Tower.", "Eiffel Tower"}, {"an apple", "Apple"}, {"THE  GREAT   wall!", "great wall"},
      {"A cat, a hat.", "cat hat"}};
  const std::vector<std::pair<std::string, std::string>> different = {{"Eiffel Towers", "Eiffel Tower"},
                                                                      {"theory", "ory"}};
  TaskSpec em;
  for (const auto& [a, b] : same) c.expect(!is_failure(a, b, em), "EM should match: \"" + a + "\" vs \"" + b + "\"");
  for (const auto& [a, b] : different) c.expect(is_failure(a, b, em), "EM should differ: \"" + a + "\" vs \"" + b + "\"");
  return detail + " match the recount; EM article/case/punctuation cases hold";
}

std::string temperature_routing(Check& c, const ProbedRun& run) {
  std::size_t ok = 0;
  std::map<Purpose, std::size_t> per;
  for (const auto& r : run.probe.requests) {
    const double expected = r.purpose == Purpose::generation ? 0.7 : 0.0;
    if (r.temperature == expected) {
      ++ok;
    } else {
      c.expect(false, std::string(to_string(r.purpose)) + " sent at temperature " + std::to_string(r.temperature));
    }
    ++per[r.purpose];
  }
  c.expect(!run.probe.requests.empty(), "no requests recorded");
  for (auto p : kAllPurposes) c.expect(per[p] > 0, std::string("no ") + std::string(to_string(p)) + " requests recorded");
  return std::to_string(ok) + "/" + std::to_string(run.probe.requests.size()) + " requests on the mandated temperature";
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  // The fixture config names its hook relative to the fixture directory.
  fs::current_path(augflow::testing::kFixtureDir / "arith");

  ProbedRun run;
  std::string probe_error;
  try {
    run_probed(run);
  } catch (const std::exception& e) {
    probe_error = e.what();
  }
  auto needs_run = [&](const std::function<std::string(Check&, const ProbedRun&)>& body) {
    return [&, body](Check& c) -> std::string {
      if (!probe_error.empty()) {
        c.expect(false, "fixture run failed: " + probe_error);
        return "";
      }
      return body(c, run);
    };
  };

  criterion("iteration loop conformance", algorithm_conformance);
  criterion("call accounting", needs_run(call_accounting));
  criterion("clustering oracle", clustering_oracle);
  criterion("quota law", quota_law);
  criterion("qc gate law", needs_run(qc_gate_law));
  criterion("validation isolation", needs_run(validation_isolation));
  criterion("evaluator oracle", evaluator_oracle);
  criterion("temperature routing", needs_run(temperature_routing));

  std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
