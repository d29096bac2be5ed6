#include "augflow/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "augflow/errors.hpp"
#include "augflow/process.hpp"
#include "augflow/providers.hpp"
#include "augflow/random.hpp"
#include "augflow/sim/simulated_provider.hpp"

namespace augflow {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kDescriptorFile = "endpoint.json";
constexpr const char* kHookConfigFile = "hook_config.json";
constexpr const char* kStateFile = "state.json";
constexpr const char* kContextFile = "context.json";

// Seed streams; one block of 100 per iteration.
std::uint64_t stream(int iteration, std::uint64_t k) { return static_cast<std::uint64_t>(iteration) * 100 + k; }

void write_json(const fs::path& path, const json& j) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failure on " + path.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + " is not valid JSON: " + e.what());
  }
}

/// Run fn(i) for i in [0, n) on up to `workers` threads; rethrows the first
/// failure after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json errors_to_json(const std::vector<ErrorRecord>& v) {
  json a = json::array();
  for (const auto& e : v) a.push_back(error_to_json(e));
  return a;
}

std::vector<ErrorRecord> errors_from_json(const json& a) {
  std::vector<ErrorRecord> v;
  for (const auto& e : a) v.push_back(error_from_json(e));
  return v;
}

json samples_to_json(const std::vector<Sample>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(sample_to_json(s));
  return a;
}

std::vector<Sample> samples_from_json(const json& a) {
  std::vector<Sample> v;
  for (const auto& s : a) v.push_back(sample_from_json(s, Split::train, ""));
  return v;
}

json clustering_to_json(const ClusteringOutcome& c) {
  return {{"curve",
           {{"ks", c.curve.ks},
            {"wcss", c.curve.wcss},
            {"chord_distance", c.curve.chord_distance},
            {"chosen_k", c.curve.chosen_k}}},
          {"k", c.clusters.k},
          {"assignments", c.clusters.assignments},
          {"centroids", c.clusters.centroids},
          {"wcss", c.clusters.wcss}};
}

ClusteringOutcome clustering_from_json(const json& j) {
  ClusteringOutcome c;
  const auto& cv = j.at("curve");
  c.curve.ks = cv.at("ks").get<std::vector<std::size_t>>();
  c.curve.wcss = cv.at("wcss").get<std::vector<double>>();
  c.curve.chord_distance = cv.at("chord_distance").get<std::vector<double>>();
  c.curve.chosen_k = cv.at("chosen_k").get<std::size_t>();
  c.clusters.k = j.at("k").get<std::size_t>();
  c.clusters.assignments = j.at("assignments").get<std::vector<std::size_t>>();
  c.clusters.centroids = j.at("centroids").get<std::vector<Point>>();
  c.clusters.wcss = j.at("wcss").get<double>();
  return c;
}

json batch_to_json(const GenerationBatch& b) {
  json j = {{"batch_id", b.batch_id},
            {"branch", to_string(b.branch)},
            {"requested", b.requested},
            {"attempt", b.attempt},
            {"seed_samples", samples_to_json(b.seed_samples)},
            {"seed_errors", errors_to_json(b.seed_errors)}};
  if (b.strategy) j["strategy"] = card_to_json(*b.strategy);
  if (b.feedback) j["feedback"] = *b.feedback;
  return j;
}

GenerationBatch batch_from_json(const json& j) {
  GenerationBatch b;
  b.batch_id = j.at("batch_id").get<std::string>();
  b.branch = j.at("branch").get<std::string>() == "pattern" ? Branch::pattern : Branch::error;
  b.requested = j.at("requested").get<std::size_t>();
  b.attempt = j.at("attempt").get<int>();
  b.seed_samples = samples_from_json(j.at("seed_samples"));
  b.seed_errors = errors_from_json(j.at("seed_errors"));
  if (j.contains("strategy")) b.strategy = card_from_json(j.at("strategy"));
  if (j.contains("feedback")) b.feedback = j.at("feedback").get<std::string>();
  return b;
}

json result_to_json(const GenerationResult& r) {
  return {{"samples", samples_to_json(r.samples)},
          {"malformed", r.malformed},
          {"isolation_rejects", r.isolation_rejects},
          {"truncated", r.truncated},
          {"unparseable", r.unparseable}};
}

GenerationResult result_from_json(const json& j) {
  GenerationResult r;
  r.samples = samples_from_json(j.at("samples"));
  r.malformed = j.at("malformed").get<std::size_t>();
  r.isolation_rejects = j.at("isolation_rejects").get<std::size_t>();
  r.truncated = j.at("truncated").get<std::size_t>();
  r.unparseable = j.at("unparseable").get<bool>();
  return r;
}

json gate_full_json(const GateOutcome& g) {
  json j = gate_to_json(g);
  j["samples"] = samples_to_json(g.accepted_samples);
  return j;
}

GateOutcome gate_from_json(const json& j) {
  GateOutcome g;
  g.batch_id = j.at("batch_id").get<std::string>();
  g.branch = j.at("branch").get<std::string>() == "pattern" ? Branch::pattern : Branch::error;
  g.dropped = j.at("dropped").get<bool>();
  g.accepted_samples = samples_from_json(j.at("samples"));
  for (const auto& a : j.at("attempts")) {
    g.history.push_back({a.at("attempt").get<int>(), a.at("produced").get<std::size_t>(),
                         a.at("batch_score").get<double>(), a.at("accepted").get<bool>(),
                         a.at("feedback").get<std::string>(), a.at("flags").get<std::vector<std::string>>()});
  }
  return g;
}

json mark_to_json(const StageMark& m) {
  return {{"name", m.name}, {"seq", m.seq}, {"inputs", m.inputs}, {"outputs", m.outputs}};
}

StageMark mark_from_json(const json& j) {
  return {j.at("name").get<std::string>(), j.at("seq").get<std::size_t>(),
          j.at("inputs").get<std::vector<std::string>>(), j.at("outputs").get<std::vector<std::string>>()};
}

json calls_to_json(const std::map<Purpose, CallCounts>& calls) {
  json j = json::object();
  for (auto p : kAllPurposes) {
    auto it = calls.find(p);
    const CallCounts c = it == calls.end() ? CallCounts{} : it->second;
    j[std::string(to_string(p))] = {{"calls", c.calls}, {"attempts", c.attempts}, {"failures", c.failures}};
  }
  return j;
}

std::map<Purpose, CallCounts> calls_from_json(const json& j) {
  std::map<Purpose, CallCounts> out;
  for (const auto& [name, c] : j.items()) {
    out[parse_purpose(name)] = {c.at("calls").get<std::size_t>(), c.at("attempts").get<std::size_t>(),
                                c.at("failures").get<std::size_t>()};
  }
  return out;
}

/// Adds the gateway calls made during its lifetime to `into`.
class CallScope {
 public:
  CallScope(const Gateway& g, std::map<Purpose, CallCounts>& into) : g_(g), into_(into) {
    for (auto p : kAllPurposes) before_[p] = g_.stats(p);
  }
  ~CallScope() {
    for (auto p : kAllPurposes) {
      const auto now = g_.stats(p);
      auto& c = into_[p];
      c.calls += now.calls - before_[p].calls;
      c.attempts += now.attempts - before_[p].attempts;
      c.failures += now.failures - before_[p].failures;
    }
  }
  CallScope(const CallScope&) = delete;
  CallScope& operator=(const CallScope&) = delete;

 private:
  const Gateway& g_;
  std::map<Purpose, CallCounts>& into_;
  std::map<Purpose, PurposeStats> before_;
};

void require_stage(const IterationContext& ctx, std::string_view needed, std::string_view stage) {
  if (!ctx.has_stage(needed)) {
    throw Error("stage " + std::string(stage) + " of iteration " + std::to_string(ctx.iteration) + " needs " +
                std::string(needed) + " first");
  }
}

}  // namespace

bool IterationContext::has_stage(std::string_view name) const {
  return std::any_of(stages.begin(), stages.end(), [&](const StageMark& m) { return m.name == name; });
}

json context_to_json(const IterationContext& c) {
  json patterns = json::array();
  for (const auto& p : c.patterns) patterns.push_back(pattern_to_json(p));
  json cards = json::array();
  for (const auto& card : c.strategies.cards) cards.push_back(card_to_json(card));
  json analyses = json::array();
  for (const auto& a : c.analysis.analyses) analyses.push_back(analysis_to_json(a));
  json batches = json::array();
  for (const auto& b : c.batches) batches.push_back(batch_to_json(b));
  json firsts = json::array();
  for (const auto& r : c.first_attempts) firsts.push_back(result_to_json(r));
  json gates = json::array();
  for (const auto& g : c.gates) gates.push_back(gate_full_json(g));
  json stages = json::array();
  for (const auto& m : c.stages) stages.push_back(mark_to_json(m));

  return {{"iteration", c.iteration},
          {"student_model", c.student_model},
          {"train_size", c.train_size},
          {"val_size", c.val_size},
          {"train_errors", errors_to_json(c.train_errors)},
          {"val_errors", errors_to_json(c.val_errors)},
          {"analyzed_errors", errors_to_json(c.analyzed_errors)},
          {"analysis",
           {{"analyses", analyses},
            {"batches", c.analysis.batches},
            {"skipped_batches", c.analysis.skipped_batches},
            {"dropped_entries", c.analysis.dropped_entries},
            {"reasks", c.analysis.reasks}}},
          {"clustering", c.clustering ? clustering_to_json(*c.clustering) : json(nullptr)},
          {"patterns", patterns},
          {"strategies",
           {{"cards", cards},
            {"missing_categories", c.strategies.missing_categories},
            {"aborted", c.strategies.aborted},
            {"reasks", c.strategies.reasks},
            {"retries", c.strategies.retries}}},
          {"quota", quota_to_json(c.quota)},
          {"error_seed_pool", errors_to_json(c.error_seed_pool)},
          {"batches", batches},
          {"first_attempts", firsts},
          {"gates", gates},
          {"qc",
           {{"accepted_batches", c.qc.accepted_batches},
            {"dropped_batches", c.qc.dropped_batches},
            {"total_attempts", c.qc.total_attempts},
            {"accepted_samples", c.qc.accepted_samples}}},
          {"synthetic_file", c.synthetic_file},
          {"merged_train_file", c.merged_train_file},
          {"merged_size", c.merged_size},
          {"next_model", c.next_model},
          {"calls", calls_to_json(c.calls)},
          {"stages", stages},
          {"produced_at", c.produced_at}};
}

IterationContext context_from_json(const json& j) {
  IterationContext c;
  c.iteration = j.at("iteration").get<int>();
  c.student_model = j.at("student_model").get<std::string>();
  c.train_size = j.at("train_size").get<std::size_t>();
  c.val_size = j.at("val_size").get<std::size_t>();
  c.train_errors = errors_from_json(j.at("train_errors"));
  c.val_errors = errors_from_json(j.at("val_errors"));
  c.analyzed_errors = errors_from_json(j.at("analyzed_errors"));
  const auto& an = j.at("analysis");
  for (const auto& a : an.at("analyses")) c.analysis.analyses.push_back(analysis_from_json(a));
  c.analysis.batches = an.at("batches").get<std::size_t>();
  c.analysis.skipped_batches = an.at("skipped_batches").get<std::size_t>();
  c.analysis.dropped_entries = an.at("dropped_entries").get<std::size_t>();
  c.analysis.reasks = an.at("reasks").get<std::size_t>();
  if (!j.at("clustering").is_null()) c.clustering = clustering_from_json(j.at("clustering"));
  for (const auto& p : j.at("patterns")) c.patterns.push_back(pattern_from_json(p));
  const auto& st = j.at("strategies");
  for (const auto& card : st.at("cards")) c.strategies.cards.push_back(card_from_json(card));
  c.strategies.missing_categories = st.at("missing_categories").get<std::vector<std::string>>();
  c.strategies.aborted = st.at("aborted").get<bool>();
  c.strategies.reasks = st.at("reasks").get<std::size_t>();
  c.strategies.retries = st.at("retries").get<std::size_t>();
  c.quota = quota_from_json(j.at("quota"));
  c.error_seed_pool = errors_from_json(j.at("error_seed_pool"));
  for (const auto& b : j.at("batches")) c.batches.push_back(batch_from_json(b));
  for (const auto& r : j.at("first_attempts")) c.first_attempts.push_back(result_from_json(r));
  for (const auto& g : j.at("gates")) c.gates.push_back(gate_from_json(g));
  const auto& qc = j.at("qc");
  c.qc = {qc.at("accepted_batches").get<std::size_t>(), qc.at("dropped_batches").get<std::size_t>(),
          qc.at("total_attempts").get<std::size_t>(), qc.at("accepted_samples").get<std::size_t>()};
  c.synthetic_file = j.at("synthetic_file").get<std::string>();
  c.merged_train_file = j.at("merged_train_file").get<std::string>();
  c.merged_size = j.at("merged_size").get<std::size_t>();
  c.next_model = j.at("next_model").get<std::string>();
  c.calls = calls_from_json(j.at("calls"));
  for (const auto& m : j.at("stages")) c.stages.push_back(mark_from_json(m));
  c.produced_at = j.at("produced_at").get<std::map<std::string, std::size_t>>();
  return c;
}

json state_to_json(const PipelineState& s) {
  json iters = json::array();
  for (const auto& c : s.iterations) iters.push_back(context_to_json(c));
  return {{"iteration", s.iteration},
          {"train_file", s.train_file},
          {"val_file", s.val_file},
          {"current_train_file", s.current_train_file},
          {"model_endpoint", binding_to_json(s.model_endpoint)},
          {"hook_calls", s.hook_calls},
          {"stage_seq", s.stage_seq},
          {"initial_finetune", s.initial_finetune ? mark_to_json(*s.initial_finetune) : json(nullptr)},
          {"iterations", iters}};
}

PipelineState state_from_json(const json& j) {
  PipelineState s;
  s.iteration = j.at("iteration").get<int>();
  s.train_file = j.at("train_file").get<std::string>();
  s.val_file = j.at("val_file").get<std::string>();
  s.current_train_file = j.at("current_train_file").get<std::string>();
  s.model_endpoint = binding_from_json(j.at("model_endpoint"));
  s.hook_calls = j.at("hook_calls").get<std::size_t>();
  s.stage_seq = j.at("stage_seq").get<std::size_t>();
  if (!j.at("initial_finetune").is_null()) s.initial_finetune = mark_from_json(j.at("initial_finetune"));
  for (const auto& c : j.at("iterations")) s.iterations.push_back(context_from_json(c));
  return s;
}

json iteration_report(const IterationContext& c) {
  json patterns = json::array();
  for (const auto& p : c.patterns) {
    patterns.push_back({{"cluster_index", p.cluster_index},
                        {"category_name", p.category_name},
                        {"error_pattern", p.error_pattern},
                        {"placeholder", p.placeholder}});
  }
  json strategies = json::array();
  for (const auto& s : c.strategies.cards) {
    strategies.push_back({{"cluster_index", s.cluster_index},
                          {"category_name", s.category_name},
                          {"strategy_name", s.strategy_name},
                          {"generation_approach", s.generation_approach},
                          {"key_elements", s.key_elements}});
  }
  json cluster_sizes = json::array();
  json clustering = nullptr;
  if (c.clustering) {
    std::vector<std::size_t> sizes(c.clustering->clusters.k, 0);
    for (auto a : c.clustering->clusters.assignments) ++sizes[a];
    clustering = {{"k", c.clustering->clusters.k},
                  {"sizes", sizes},
                  {"wcss", c.clustering->clusters.wcss},
                  {"elbow",
                   {{"ks", c.clustering->curve.ks},
                    {"wcss", c.clustering->curve.wcss},
                    {"chord_distance", c.clustering->curve.chord_distance}}}};
  }

  std::size_t requested = 0, produced = 0, malformed = 0, rejects = 0, truncated = 0, unparseable = 0;
  for (std::size_t i = 0; i < c.batches.size(); ++i) {
    requested += c.batches[i].requested;
    if (i < c.first_attempts.size()) {
      produced += c.first_attempts[i].samples.size();
      malformed += c.first_attempts[i].malformed;
      rejects += c.first_attempts[i].isolation_rejects;
      truncated += c.first_attempts[i].truncated;
      unparseable += c.first_attempts[i].unparseable ? 1 : 0;
    }
  }
  std::size_t pattern_samples = 0, error_samples = 0;
  json batches = json::array();
  json dropped = json::array();
  for (const auto& g : c.gates) {
    batches.push_back(gate_to_json(g));
    if (g.dropped) dropped.push_back({{"batch_id", g.batch_id}, {"branch", to_string(g.branch)}, {"attempts", g.history.size()}});
    (g.branch == Branch::pattern ? pattern_samples : error_samples) += g.accepted_samples.size();
  }
  json stages = json::array();
  for (const auto& m : c.stages) stages.push_back(mark_to_json(m));

  return {{"iteration", c.iteration},
          {"student_model", c.student_model},
          {"error_counts",
           {{"train", c.train_errors.size()},
            {"val", c.val_errors.size()},
            {"val_analyzed", c.analyzed_errors.size()},
            {"train_size", c.train_size},
            {"val_size", c.val_size}}},
          {"analysis",
           {{"analyses", c.analysis.analyses.size()},
            {"batches", c.analysis.batches},
            {"skipped_batches", c.analysis.skipped_batches},
            {"dropped_entries", c.analysis.dropped_entries},
            {"reasks", c.analysis.reasks}}},
          {"K", c.clustering ? c.clustering->clusters.k : 0},
          {"clustering", clustering},
          {"patterns", patterns},
          {"strategies", strategies},
          {"strategy_flags",
           {{"missing_categories", c.strategies.missing_categories},
            {"aborted", c.strategies.aborted},
            {"reasks", c.strategies.reasks},
            {"retries", c.strategies.retries}}},
          {"quota", quota_to_json(c.quota)},
          {"generation",
           {{"batches", c.batches.size()},
            {"requested", requested},
            {"produced_first_attempt", produced},
            {"malformed", malformed},
            {"isolation_rejects", rejects},
            {"truncated", truncated},
            {"unparseable_batches", unparseable}}},
          {"qc_stats",
           {{"accepted_batches", c.qc.accepted_batches},
            {"dropped_batches", c.qc.dropped_batches},
            {"total_attempts", c.qc.total_attempts},
            {"accepted_samples", c.qc.accepted_samples},
            {"pattern_samples", pattern_samples},
            {"error_samples", error_samples}}},
          {"batches", batches},
          {"dropped_batches", dropped},
          {"files", {{"synthetic", c.synthetic_file}, {"merged_train", c.merged_train_file}, {"merged_size", c.merged_size}}},
          {"next_model", c.next_model},
          {"calls", calls_to_json(c.calls)},
          {"stages", stages}};
}

json build_report(const PipelineState& s, const RunConfig& cfg) {
  json iterations = json::array();
  std::map<Purpose, CallCounts> totals;
  std::size_t synthetic = 0;
  for (const auto& c : s.iterations) {
    iterations.push_back(iteration_report(c));
    for (const auto& [p, n] : c.calls) {
      totals[p].calls += n.calls;
      totals[p].attempts += n.attempts;
      totals[p].failures += n.failures;
    }
    synthetic += c.qc.accepted_samples;
  }
  return {{"seed", cfg.seed},
          {"task", to_string(cfg.task.kind)},
          {"max_iterations", cfg.max_iterations},
          {"settings",
           {{"subsample_n", cfg.subsample_n},
            {"k_min", cfg.pattern.k_min},
            {"k_max", cfg.pattern.k_max},
            {"ratio", cfg.ratio},
            {"pattern_error_ratio", cfg.pattern_error_ratio},
            {"threshold", cfg.quality.threshold},
            {"max_attempts", cfg.quality.max_attempts},
            {"seed_pool", to_string(cfg.seed_pool)}}},
          {"initial_finetune", s.initial_finetune ? mark_to_json(*s.initial_finetune) : json(nullptr)},
          {"hook_calls", s.hook_calls},
          {"completed_iterations", s.iteration},
          {"final_model", s.model_endpoint.model_id},
          {"iterations", iterations},
          {"totals", {{"synthetic_samples", synthetic}, {"calls", calls_to_json(totals)}}}};
}

ChatProviderFactory default_provider_factory(const RunConfig& cfg) {
  return [dry = cfg.dry_run, replay = cfg.replay](Purpose, const ProviderSpec& spec) -> std::shared_ptr<ChatProvider> {
    auto base = [&]() -> std::shared_ptr<ChatProvider> {
      if (spec.kind == "simulated") return std::make_shared<sim::SimulatedChatProvider>();
      return std::make_shared<HttpChatProvider>(spec.binding);
    };
    if (!dry) return base();
    return std::make_shared<ReplayChatProvider>(replay.dir, replay.record ? base() : nullptr, replay.record);
  };
}

Orchestrator::Orchestrator(RunConfig cfg) : Orchestrator(cfg, default_provider_factory(cfg)) {}

Orchestrator::Orchestrator(RunConfig cfg, ChatProviderFactory factory)
    : cfg_(std::move(cfg)), factory_(std::move(factory)) {
  cfg_.validate();
  cfg_.train_file = fs::absolute(cfg_.train_file);
  cfg_.val_file = fs::absolute(cfg_.val_file);
  cfg_.work_dir = fs::absolute(cfg_.work_dir);
  prompts_ = cfg_.prompts_dir.empty() ? PromptLibrary::defaults() : PromptLibrary::from_directory(cfg_.prompts_dir);

  for (auto p : kAllPurposes) {
    const auto& spec = cfg_.providers.at(p);
    gateway_.bind(p, spec.binding, factory_(p, spec));
  }
  if (cfg_.embedding.kind == "http" && !cfg_.dry_run) {
    gateway_.bind_embedder(std::make_shared<HttpEmbeddingProvider>(cfg_.embedding.binding), cfg_.embedding.binding.retry);
  } else {
    if (cfg_.embedding.kind == "http") spdlog::warn("dry run: using the hash embedder instead of the http embedder");
    gateway_.bind_embedder(std::make_shared<HashEmbedder>(cfg_.embedding.dim, cfg_.embedding.seed));
  }
  gateway_.set_distinct_judge(cfg_.distinct_judge);
  gateway_.check_bindings();

  train_ = load_dataset(cfg_.train_file, DatasetSplit::train);
  val_ = load_dataset(cfg_.val_file, DatasetSplit::val);
  guard_ = ValidationGuard(val_);
  for (const auto& s : train_.samples) {
    if (guard_.is_validation_id(s.id)) throw ValidationLeak("training sample id " + s.id + " is also a validation id");
  }
  fs::create_directories(cfg_.work_dir);
}

PipelineState Orchestrator::initial_state() const {
  PipelineState s;
  s.train_file = cfg_.train_file.filename().string();
  s.val_file = cfg_.val_file.filename().string();
  s.model_endpoint = cfg_.providers.at(Purpose::student_eval).binding;
  return s;
}

fs::path Orchestrator::iteration_dir(int iteration) const {
  return cfg_.work_dir / ("iter_" + std::to_string(iteration));
}

Dataset Orchestrator::current_train(const PipelineState& state) const {
  if (state.current_train_file.empty()) return train_;
  return load_dataset(cfg_.work_dir / state.current_train_file, DatasetSplit::train);
}

void Orchestrator::rebind_student(const ProviderBinding& binding) {
  ProviderSpec spec = cfg_.providers.at(Purpose::student_eval);
  spec.binding = binding;
  gateway_.bind(Purpose::student_eval, binding, factory_(Purpose::student_eval, spec));
}

StageMark& Orchestrator::mark(PipelineState& state, IterationContext& ctx, std::string name,
                              std::vector<std::string> inputs, std::vector<std::string> outputs) {
  StageMark m{std::move(name), ++state.stage_seq, std::move(inputs), std::move(outputs)};
  for (const auto& out : m.outputs) ctx.produced_at[out] = m.seq;
  spdlog::info("iteration {} stage {} (seq {})", ctx.iteration, m.name, m.seq);
  ctx.stages.push_back(std::move(m));
  return ctx.stages.back();
}

ProviderBinding Orchestrator::invoke_finetune_hook(PipelineState& state, const fs::path& train_file, int iteration) {
  if (cfg_.hook.command.empty()) throw ConfigError("hook.command is not set");
  const auto out_dir = cfg_.work_dir / ("model_it" + std::to_string(iteration));
  fs::create_directories(out_dir);
  fs::remove(out_dir / kDescriptorFile);

  const auto hook_config = out_dir / kHookConfigFile;
  write_json(hook_config, {{"train_file", train_file.string()},
                           {"iteration", iteration},
                           {"output_dir", out_dir.string()},
                           {"base_model", cfg_.hook.base_model},
                           {"lora_r", cfg_.hook.lora_r},
                           {"lora_alpha", cfg_.hook.lora_alpha},
                           {"lora_dropout", cfg_.hook.lora_dropout},
                           {"epochs", cfg_.hook.epochs},
                           {"learning_rate", cfg_.hook.learning_rate},
                           {"extra", cfg_.hook.extra}});
  const auto argv = expand_command(cfg_.hook.command, {{"train_file", train_file.string()},
                                                       {"iteration", std::to_string(iteration)},
                                                       {"output_dir", out_dir.string()},
                                                       {"hook_config", hook_config.string()}});
  spdlog::info("fine-tune hook, iteration {}: {}", iteration, argv.empty() ? "" : argv.front());
  const auto res = run_process(argv);
  if (res.exit_code != 0) throw HookFailed(res.exit_code, tail(res.stderr_text));

  const auto descriptor = out_dir / kDescriptorFile;
  if (!fs::exists(descriptor)) throw HookProtocolError("hook did not write " + descriptor.string());
  json d;
  try {
    d = read_json(descriptor);
  } catch (const IoError& e) {
    throw HookProtocolError(e.what());
  }
  if (!d.is_object() || !d.contains("endpoint") || !d["endpoint"].is_string() || !d.contains("model_id") ||
      !d["model_id"].is_string() || d["model_id"].get<std::string>().empty()) {
    throw HookProtocolError("descriptor " + descriptor.string() + " needs string fields endpoint and model_id");
  }
  ProviderBinding binding = cfg_.providers.at(Purpose::student_eval).binding;
  binding.endpoint = d["endpoint"].get<std::string>();
  binding.model_id = d["model_id"].get<std::string>();
  rebind_student(binding);
  state.model_endpoint = binding;
  ++state.hook_calls;
  return binding;
}

void Orchestrator::initial_finetune(PipelineState& state) {
  for (const auto& s : train_.samples) guard_.check(s);
  invoke_finetune_hook(state, cfg_.train_file, 0);
  state.initial_finetune = StageMark{"finetune", ++state.stage_seq, {"train_set"}, {"model_0"}};
}

void Orchestrator::stage_evaluate(PipelineState& state, IterationContext& ctx) {
  if (state.hook_calls == 0) throw Error("the student has not been fine-tuned yet");
  CallScope calls(gateway_, ctx.calls);
  ctx.student_model = state.model_endpoint.model_id;
  ctx.train_size = train_.size();
  ctx.val_size = val_.size();

  ctx.train_errors = collect_errors(train_, predict_all(train_, gateway_), cfg_.task);
  mark(state, ctx, "evaluate_train", {"student", "train_set"}, {"train_errors"});
  ctx.val_errors = collect_errors(val_, predict_all(val_, gateway_), cfg_.task);
  mark(state, ctx, "evaluate_val", {"student", "val_set"}, {"val_errors"});
  spdlog::info("iteration {}: {} / {} training errors, {} / {} validation errors", ctx.iteration,
               ctx.train_errors.size(), train_.size(), ctx.val_errors.size(), val_.size());
}

void Orchestrator::stage_analyze(PipelineState& state, IterationContext& ctx) {
  require_stage(ctx, "evaluate_val", "analyze");
  CallScope calls(gateway_, ctx.calls);
  PatternAgent agent(gateway_, prompts_, cfg_.pattern);

  ctx.analyzed_errors = subsample_errors(ctx.val_errors, cfg_.subsample_n, derive_seed(cfg_.seed, stream(ctx.iteration, 1)));
  mark(state, ctx, "subsample_val_errors", {"val_errors"}, {"analyzed_errors"});

  ctx.analysis = ctx.analyzed_errors.empty() ? AnalysisOutcome{} : agent.analyze_errors(ctx.analyzed_errors);
  mark(state, ctx, "analyze_errors", {"analyzed_errors"}, {"analyses"});

  ctx.clustering.reset();
  if (!ctx.analysis.analyses.empty()) {
    const auto points = agent.embed_analyses(ctx.analysis.analyses);
    ctx.clustering = agent.cluster(points, derive_seed(cfg_.seed, stream(ctx.iteration, 2)));
  }
  mark(state, ctx, "cluster", {"analyses"}, {"clusters"});

  ctx.patterns.clear();
  if (ctx.clustering) ctx.patterns = agent.categorize_all(ctx.clustering->clusters, ctx.analysis.analyses, ctx.analyzed_errors);
  mark(state, ctx, "categorize_patterns", {"clusters", "analyses"}, {"patterns"});

  ctx.strategies = StrategyOutcome{};
  if (!ctx.patterns.empty()) {
    ctx.strategies = agent.draft_strategies(ctx.patterns);
    for (auto& card : ctx.strategies.cards) card = redact_card(std::move(card), guard_);
  }
  mark(state, ctx, "draft_strategies", {"patterns"}, {"strategies"});
}

void Orchestrator::stage_generate(PipelineState& state, IterationContext& ctx) {
  require_stage(ctx, "draft_strategies", "generate");
  CallScope calls(gateway_, ctx.calls);
  const auto& cards = ctx.strategies.cards;
  ctx.quota = plan_quota(train_.size(), cards.size(), ctx.train_errors.size(), cfg_.ratio, cfg_.pattern_error_ratio);
  mark(state, ctx, "plan_quota", {"strategies", "train_errors"}, {"quota"});

  GenerationAgent agent(gateway_, prompts_, cfg_.generation, &guard_);
  const auto prefix = "it" + std::to_string(ctx.iteration);
  const auto workers = static_cast<std::size_t>(gateway_.binding(Purpose::generation).max_concurrency);
  const Dataset pool = cfg_.seed_pool == SeedPool::merged ? current_train(state) : train_;

  auto pattern = plan_pattern_batches(cards, ctx.quota, pool, cfg_.generation, prefix,
                                      derive_seed(cfg_.seed, stream(ctx.iteration, 3)));
  std::vector<GenerationResult> pattern_results(pattern.size());
  parallel_for(pattern.size(), workers, [&](std::size_t i) { pattern_results[i] = agent.generate_pattern_guided(pattern[i]); });
  mark(state, ctx, "generate_pattern", {"quota", "strategies", "train_set"}, {"pattern_batches"});

  ctx.error_seed_pool.clear();
  for (auto i : sample_indices(ctx.train_errors.size(), cfg_.error_seed_pool, derive_seed(cfg_.seed, stream(ctx.iteration, 4)))) {
    ctx.error_seed_pool.push_back(ctx.train_errors[i]);
  }
  auto error = plan_error_batches(ctx.error_seed_pool, ctx.quota.error_total, cfg_.generation, prefix,
                                  derive_seed(cfg_.seed, stream(ctx.iteration, 5)));
  std::vector<GenerationResult> error_results(error.size());
  parallel_for(error.size(), workers, [&](std::size_t i) { error_results[i] = agent.generate_error_based(error[i]); });
  mark(state, ctx, "generate_error", {"quota", "train_errors"}, {"error_batches"});

  ctx.batches = std::move(pattern);
  ctx.batches.insert(ctx.batches.end(), error.begin(), error.end());
  ctx.first_attempts = std::move(pattern_results);
  ctx.first_attempts.insert(ctx.first_attempts.end(), error_results.begin(), error_results.end());

  Dataset staged;
  staged.split = DatasetSplit::synthetic;
  for (const auto& r : ctx.first_attempts) staged.samples.insert(staged.samples.end(), r.samples.begin(), r.samples.end());
  fs::create_directories(iteration_dir(ctx.iteration));
  write_dataset(staged, iteration_dir(ctx.iteration) / "staged_synthetic.jsonl");
}

void Orchestrator::stage_quality(PipelineState& state, IterationContext& ctx) {
  require_stage(ctx, "generate_error", "quality control");
  CallScope calls(gateway_, ctx.calls);
  const Dataset pool = current_train(state);
  GenerationAgent gen(gateway_, prompts_, cfg_.generation, &guard_);
  QualityAgent judge(gateway_, prompts_, cfg_.quality);
  const BatchProducer producer = [&](const GenerationBatch& b) {
    return b.branch == Branch::pattern ? gen.generate_pattern_guided(b) : gen.generate_error_based(b);
  };
  const OriginalLookup lookup = [&](const std::string& id) -> const Sample* {
    if (const auto* s = pool.find(id)) return s;
    return train_.find(id);
  };

  ctx.gates.assign(ctx.batches.size(), {});
  const auto workers = static_cast<std::size_t>(gateway_.binding(Purpose::quality_control).max_concurrency);
  parallel_for(ctx.batches.size(), workers, [&](std::size_t i) {
    std::optional<GenerationResult> first;
    if (i < ctx.first_attempts.size()) first = ctx.first_attempts[i];
    ctx.gates[i] = qc_gate(producer, ctx.batches[i], judge, lookup, std::move(first));
  });

  ctx.qc = {};
  Dataset synthetic;
  synthetic.split = DatasetSplit::synthetic;
  for (const auto& g : ctx.gates) {
    ctx.qc.total_attempts += g.history.size();
    if (g.dropped) {
      ++ctx.qc.dropped_batches;
      continue;
    }
    ++ctx.qc.accepted_batches;
    synthetic.samples.insert(synthetic.samples.end(), g.accepted_samples.begin(), g.accepted_samples.end());
  }
  ctx.qc.accepted_samples = synthetic.size();
  mark(state, ctx, "quality_control", {"pattern_batches", "error_batches"}, {"synthetic_set"});

  const auto dir = iteration_dir(ctx.iteration);
  fs::create_directories(dir);
  const auto rel_dir = fs::path("iter_" + std::to_string(ctx.iteration));
  for (const auto& s : synthetic.samples) guard_.check(s);
  write_dataset(synthetic, dir / "synthetic.jsonl");
  const auto merged = merge_augmented(pool, synthetic);
  write_training_file(merged, dir / "merged_train.jsonl", guard_);
  ctx.synthetic_file = (rel_dir / "synthetic.jsonl").string();
  ctx.merged_train_file = (rel_dir / "merged_train.jsonl").string();
  ctx.merged_size = merged.size();
  mark(state, ctx, "merge", {"train_set", "synthetic_set"}, {"merged_train_set"});
}

void Orchestrator::stage_finetune(PipelineState& state, IterationContext& ctx) {
  require_stage(ctx, "merge", "fine-tune");
  const auto binding = invoke_finetune_hook(state, cfg_.work_dir / ctx.merged_train_file, ctx.iteration);
  ctx.next_model = binding.model_id;
  state.current_train_file = ctx.merged_train_file;
  state.iteration = ctx.iteration;
  mark(state, ctx, "finetune", {"merged_train_set"}, {"model_" + std::to_string(ctx.iteration)});
}

void Orchestrator::run_iteration(PipelineState& state) {
  IterationContext ctx;
  ctx.iteration = state.iteration + 1;
  try {
    stage_evaluate(state, ctx);
    stage_analyze(state, ctx);
    stage_generate(state, ctx);
    stage_quality(state, ctx);
    stage_finetune(state, ctx);
  } catch (...) {
    try {
      checkpoint(state, &ctx);
    } catch (const std::exception& e) {
      spdlog::error("checkpoint after failure also failed: {}", e.what());
    }
    throw;
  }
  state.iterations.push_back(std::move(ctx));
  checkpoint(state, &state.iterations.back());
}

json Orchestrator::run_pipeline() {
  auto state = initial_state();
  initial_finetune(state);
  checkpoint(state, nullptr);
  for (int i = 0; i < cfg_.max_iterations; ++i) run_iteration(state);
  return emit_report(state);
}

void Orchestrator::checkpoint(const PipelineState& state, const IterationContext* ctx) const {
  fs::create_directories(cfg_.work_dir);
  write_json(cfg_.work_dir / kStateFile, state_to_json(state));
  if (ctx) {
    fs::create_directories(iteration_dir(ctx->iteration));
    write_json(iteration_dir(ctx->iteration) / kContextFile, context_to_json(*ctx));
  }
}

std::optional<PipelineState> Orchestrator::load_state() {
  const auto path = cfg_.work_dir / kStateFile;
  if (!fs::exists(path)) return std::nullopt;
  auto state = state_from_json(read_json(path));
  if (state.hook_calls > 0) rebind_student(state.model_endpoint);
  return state;
}

IterationContext Orchestrator::load_context(int iteration) const {
  const auto path = iteration_dir(iteration) / kContextFile;
  if (!fs::exists(path)) {
    IterationContext ctx;
    ctx.iteration = iteration;
    return ctx;
  }
  return context_from_json(read_json(path));
}

json Orchestrator::emit_report(const PipelineState& state) const {
  auto report = build_report(state, cfg_);
  std::ofstream out(cfg_.work_dir / "report.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report in " + cfg_.work_dir.string());
  out << report.dump(2) << '\n';
  if (!out) throw IoError("write failure on report.json");
  return report;
}

}  // namespace augflow
