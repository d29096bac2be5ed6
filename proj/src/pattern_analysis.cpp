#include "augflow/pattern_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "augflow/errors.hpp"
#include "augflow/json_extract.hpp"
#include "augflow/random.hpp"

namespace augflow {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

/// Lenient text coercion for model-produced fields.
std::string as_text(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_null()) return {};
  return j.dump();
}

std::string field(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? std::string{} : trim(as_text(*it));
}

std::vector<std::string> text_list(const json& obj, const char* key) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  if (it->is_array()) {
    for (const auto& v : *it) out.push_back(as_text(v));
  } else if (!it->is_null()) {
    out.push_back(as_text(*it));
  }
  return out;
}

std::optional<long long> as_index(const json& j) {
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (d == static_cast<double>(static_cast<long long>(d))) return static_cast<long long>(d);
    return std::nullopt;
  }
  if (j.is_string()) {
    try {
      std::size_t used = 0;
      const auto v = std::stoll(j.get<std::string>(), &used);
      if (used == j.get<std::string>().size()) return v;
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct ParsedAnalyses {
  std::vector<ErrorAnalysis> analyses;
  std::size_t dropped = 0;
};

ParsedAnalyses parse_analyses(const std::string& raw, const std::vector<ErrorRecord>& batch) {
  const auto arr = extract_json_array(raw);
  ParsedAnalyses out;
  std::set<std::size_t> seen;
  for (const auto& item : arr) {
    if (!item.is_object() || !item.contains("sample_idx")) {
      ++out.dropped;
      continue;
    }
    const auto label = as_index(item["sample_idx"]);
    // Samples are labelled "SAMPLE 0".."SAMPLE n-1" in the prompt.
    if (!label || *label < 0 || *label >= static_cast<long long>(batch.size())) {
      spdlog::warn("dropping analysis with out-of-range sample_idx {}", item["sample_idx"].dump());
      ++out.dropped;
      continue;
    }
    const auto pos = static_cast<std::size_t>(*label);
    ErrorAnalysis a;
    a.sample_idx = pos;
    a.error_cause = field(item, "error_cause");
    a.scenario_category = field(item, "scenario_category");
    a.source_error_id = batch[pos].sample_id;
    if (a.error_cause.empty() || a.scenario_category.empty() || !seen.insert(pos).second) {
      ++out.dropped;
      continue;
    }
    out.analyses.push_back(std::move(a));
  }
  std::sort(out.analyses.begin(), out.analyses.end(),
            [](const ErrorAnalysis& a, const ErrorAnalysis& b) { return a.sample_idx < b.sample_idx; });
  return out;
}

std::optional<ErrorPattern> parse_pattern(const std::string& raw, std::size_t cluster_index) {
  const auto obj = extract_json_object(raw);
  ErrorPattern p;
  p.cluster_index = cluster_index;
  p.category_name = field(obj, "category_name");
  p.error_pattern = field(obj, "error_pattern");
  p.representative_samples = text_list(obj, "representative_samples");
  if (p.category_name.empty() || p.error_pattern.empty()) {
    throw MalformedOutput("categorization lacks category_name or error_pattern");
  }
  return p;
}

ErrorPattern placeholder_pattern(std::size_t cluster_index) {
  ErrorPattern p;
  p.cluster_index = cluster_index;
  p.category_name = "Uncategorized cluster " + std::to_string(cluster_index);
  p.error_pattern = p.category_name;
  p.placeholder = true;
  return p;
}

const ErrorRecord& record_for(const ErrorAnalysis& a, const std::vector<ErrorRecord>& errors) {
  for (const auto& e : errors)
    if (e.sample_id == a.source_error_id) return e;
  throw std::invalid_argument("analysis refers to unknown error " + a.source_error_id);
}

}  // namespace

json analysis_to_json(const ErrorAnalysis& a) {
  return {{"sample_idx", a.sample_idx},
          {"error_cause", a.error_cause},
          {"scenario_category", a.scenario_category},
          {"source_error_id", a.source_error_id}};
}

ErrorAnalysis analysis_from_json(const json& j) {
  return {j.at("sample_idx").get<std::size_t>(), j.at("error_cause").get<std::string>(),
          j.at("scenario_category").get<std::string>(), j.at("source_error_id").get<std::string>()};
}

json pattern_to_json(const ErrorPattern& p) {
  return {{"cluster_index", p.cluster_index},
          {"category_name", p.category_name},
          {"error_pattern", p.error_pattern},
          {"representative_samples", p.representative_samples},
          {"placeholder", p.placeholder}};
}

ErrorPattern pattern_from_json(const json& j) {
  ErrorPattern p;
  p.cluster_index = j.at("cluster_index").get<std::size_t>();
  p.category_name = j.at("category_name").get<std::string>();
  p.error_pattern = j.at("error_pattern").get<std::string>();
  p.representative_samples = j.value("representative_samples", std::vector<std::string>{});
  p.placeholder = j.value("placeholder", false);
  return p;
}

json card_to_json(const StrategyCard& c) {
  return {{"cluster_index", c.cluster_index},
          {"category_name", c.category_name},
          {"error_pattern", c.error_pattern},
          {"representative_samples", c.representative_samples},
          {"strategy_name", c.strategy_name},
          {"generation_approach", c.generation_approach},
          {"key_elements", c.key_elements}};
}

StrategyCard card_from_json(const json& j) {
  StrategyCard c;
  c.cluster_index = j.at("cluster_index").get<std::size_t>();
  c.category_name = j.at("category_name").get<std::string>();
  c.error_pattern = j.value("error_pattern", std::string{});
  c.representative_samples = j.value("representative_samples", std::vector<std::string>{});
  c.strategy_name = j.at("strategy_name").get<std::string>();
  c.generation_approach = j.at("generation_approach").get<std::string>();
  c.key_elements = j.value("key_elements", std::vector<std::string>{});
  return c;
}

json card_prompt_view(const StrategyCard& c) {
  return {{"category_name", c.category_name},
          {"strategy_name", c.strategy_name},
          {"generation_approach", c.generation_approach},
          {"key_elements", c.key_elements}};
}

StrategyCard redact_card(StrategyCard c, const ValidationGuard& guard) {
  c.category_name = guard.redact(std::move(c.category_name));
  c.error_pattern = guard.redact(std::move(c.error_pattern));
  for (auto& s : c.representative_samples) s = guard.redact(std::move(s));
  c.strategy_name = guard.redact(std::move(c.strategy_name));
  c.generation_approach = guard.redact(std::move(c.generation_approach));
  for (auto& s : c.key_elements) s = guard.redact(std::move(s));
  return c;
}

std::vector<ErrorRecord> subsample_errors(const std::vector<ErrorRecord>& errors, std::size_t n, std::uint64_t seed) {
  for (const auto& e : errors) {
    if (e.split != Split::val) throw std::invalid_argument("subsample_errors expects validation errors only");
  }
  std::vector<ErrorRecord> out;
  for (auto i : sample_indices(errors.size(), n, seed)) out.push_back(errors[i]);
  return out;
}

PatternAgent::PatternAgent(Gateway& gateway, const PromptLibrary& prompts, PatternConfig cfg)
    : gateway_(gateway), prompts_(prompts), cfg_(cfg) {
  if (cfg_.analysis_batch_size == 0) throw ConfigError("analysis batch size must be >= 1");
  if (cfg_.k_min < 2 || cfg_.k_max < cfg_.k_min) throw ConfigError("k range must satisfy 2 <= k_min <= k_max");
}

std::string PatternAgent::render_analysis_prompt(const std::vector<ErrorRecord>& batch) const {
  std::string samples;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    samples += "SAMPLE " + std::to_string(i) + ":\n";
    samples += "USER QUERY: " + batch[i].x + "\n";
    samples += "MODEL RESPONSE: " + batch[i].y_hat + "\n";
    samples += "GROUND TRUTH: " + batch[i].y + "\n";
    samples += "---\n";
  }
  return prompts_.get("error_analysis").render({{"samples", samples}});
}

AnalysisOutcome PatternAgent::analyze_errors(const std::vector<ErrorRecord>& errors) {
  AnalysisOutcome out;
  std::vector<std::vector<ErrorRecord>> batches;
  for (std::size_t i = 0; i < errors.size(); i += cfg_.analysis_batch_size) {
    const auto end = std::min(errors.size(), i + cfg_.analysis_batch_size);
    batches.emplace_back(errors.begin() + static_cast<std::ptrdiff_t>(i),
                         errors.begin() + static_cast<std::ptrdiff_t>(end));
  }
  out.batches = batches.size();
  if (batches.empty()) return out;

  std::vector<ChatRequest> reqs;
  for (const auto& b : batches) reqs.push_back(gateway_.make_request(Purpose::error_analysis, render_analysis_prompt(b)));

  std::vector<std::optional<ParsedAnalyses>> parsed(batches.size());
  auto absorb = [&](const std::vector<std::size_t>& which, const std::vector<BatchItem>& results) {
    std::vector<std::size_t> failed;
    for (std::size_t j = 0; j < which.size(); ++j) {
      const auto b = which[j];
      if (!results[j].ok()) {
        spdlog::warn("error analysis batch {} failed: {}", b, results[j].error);
        continue;  // transport failures are not re-asked
      }
      try {
        parsed[b] = parse_analyses(*results[j].text, batches[b]);
      } catch (const MalformedOutput& e) {
        failed.push_back(b);
      }
    }
    return failed;
  };

  std::vector<std::size_t> all(batches.size());
  for (std::size_t b = 0; b < all.size(); ++b) all[b] = b;
  const auto failed = absorb(all, gateway_.complete_batch(reqs));
  if (!failed.empty()) {
    std::vector<ChatRequest> again;
    for (auto b : failed) again.push_back(reqs[b]);
    out.reasks += failed.size();
    absorb(failed, gateway_.complete_batch(again));
  }

  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (!parsed[b]) {
      ++out.skipped_batches;
      spdlog::warn("skipping error analysis batch {} ({} errors)", b, batches[b].size());
      continue;
    }
    out.dropped_entries += parsed[b]->dropped;
    for (auto& a : parsed[b]->analyses) out.analyses.push_back(std::move(a));
  }
  return out;
}

std::vector<Point> PatternAgent::embed_analyses(const std::vector<ErrorAnalysis>& analyses) {
  if (analyses.empty()) throw std::invalid_argument("embed_analyses on an empty list");
  std::vector<std::string> texts;
  texts.reserve(analyses.size());
  for (const auto& a : analyses) {
    if (a.error_cause.empty() || a.scenario_category.empty()) {
      throw std::invalid_argument("analysis " + a.source_error_id + " has an empty field");
    }
    texts.push_back(a.embedding_text());
  }
  return gateway_.embed(texts);
}

ClusteringOutcome PatternAgent::cluster(const std::vector<Point>& points, std::uint64_t seed) const {
  ClusteringOutcome out;
  out.curve = elbow_curve(points, cfg_.k_min, cfg_.k_max, seed);
  const auto k = out.curve.chosen_k;
  if (k == 0) return out;
  out.clusters = kmeans(points, k, derive_seed(seed, k), cfg_.kmeans_restarts);
  return out;
}

std::string PatternAgent::render_categorization_prompt(const std::vector<ErrorAnalysis>& members,
                                                       const std::vector<ErrorRecord>& errors) const {
  std::string samples;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& e = record_for(members[i], errors);
    samples += "SAMPLE " + std::to_string(i) + ":\n";
    samples += "USER QUERY: " + e.x + "\n";
    samples += "MODEL RESPONSE: " + e.y_hat + "\n";
    samples += "GROUND TRUTH: " + e.y + "\n";
    samples += "ERROR CAUSE: " + members[i].error_cause + "\n";
    samples += "SCENARIO CATEGORY: " + members[i].scenario_category + "\n";
    samples += "---\n";
  }
  return prompts_.get("pattern_categorization").render({{"samples", samples}});
}

ErrorPattern PatternAgent::categorize_cluster(std::size_t cluster_index, const std::vector<ErrorAnalysis>& members,
                                              const std::vector<ErrorRecord>& errors) {
  if (members.empty()) throw std::invalid_argument("categorize_cluster on an empty cluster");
  const auto req = gateway_.make_request(Purpose::categorization, render_categorization_prompt(members, errors));
  for (int ask = 0; ask < 2; ++ask) {
    try {
      return *parse_pattern(gateway_.complete(req), cluster_index);
    } catch (const MalformedOutput& e) {
      spdlog::warn("categorization of cluster {} unparseable: {}", cluster_index, e.what());
    } catch (const Error& e) {
      spdlog::warn("categorization of cluster {} failed: {}", cluster_index, e.what());
      break;
    }
  }
  return placeholder_pattern(cluster_index);
}

std::vector<ErrorPattern> PatternAgent::categorize_all(const ClusterResult& clusters,
                                                       const std::vector<ErrorAnalysis>& analyses,
                                                       const std::vector<ErrorRecord>& errors) {
  std::vector<std::vector<ErrorAnalysis>> members(clusters.k);
  for (std::size_t i = 0; i < analyses.size(); ++i) members[clusters.assignments.at(i)].push_back(analyses[i]);

  std::vector<std::size_t> live;
  std::vector<ChatRequest> reqs;
  for (std::size_t c = 0; c < clusters.k; ++c) {
    if (members[c].empty()) continue;
    live.push_back(c);
    reqs.push_back(gateway_.make_request(Purpose::categorization, render_categorization_prompt(members[c], errors)));
  }

  std::map<std::size_t, ErrorPattern> done;
  std::vector<std::size_t> retry;
  const auto first = gateway_.complete_batch(reqs);
  for (std::size_t j = 0; j < live.size(); ++j) {
    if (!first[j].ok()) {
      spdlog::warn("categorization of cluster {} failed: {}", live[j], first[j].error);
      done.emplace(live[j], placeholder_pattern(live[j]));
      continue;
    }
    try {
      done.emplace(live[j], *parse_pattern(*first[j].text, live[j]));
    } catch (const MalformedOutput&) {
      retry.push_back(j);
    }
  }
  if (!retry.empty()) {
    std::vector<ChatRequest> again;
    for (auto j : retry) again.push_back(reqs[j]);
    const auto second = gateway_.complete_batch(again);
    for (std::size_t r = 0; r < retry.size(); ++r) {
      const auto c = live[retry[r]];
      try {
        if (!second[r].ok()) throw MalformedOutput(second[r].error);
        done.emplace(c, *parse_pattern(*second[r].text, c));
      } catch (const MalformedOutput& e) {
        spdlog::warn("categorization of cluster {} unparseable after re-ask: {}", c, e.what());
        done.emplace(c, placeholder_pattern(c));
      }
    }
  }

  std::vector<ErrorPattern> out;
  std::set<std::string> names;
  for (auto& [c, p] : done) {
    if (!names.insert(lower(p.category_name)).second) {
      p.category_name += " (cluster " + std::to_string(c) + ")";
      names.insert(lower(p.category_name));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string PatternAgent::render_strategy_prompt(const std::vector<ErrorPattern>& patterns) const {
  std::string cats;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    cats += "CATEGORY " + std::to_string(i + 1) + ": " + patterns[i].category_name + "\n";
    cats += "ERROR PATTERN: " + patterns[i].error_pattern + "\n";
    cats += "---\n";
  }
  if (!cats.empty()) cats.pop_back();
  return prompts_.get("strategy_drafting").render({{"categories", cats}});
}

StrategyOutcome PatternAgent::draft_strategies(const std::vector<ErrorPattern>& patterns) {
  if (patterns.empty()) throw std::invalid_argument("draft_strategies with no patterns");
  StrategyOutcome out;

  auto ask = [&](const std::vector<ErrorPattern>& subset) -> std::optional<json> {
    const auto req = gateway_.make_request(Purpose::strategy, render_strategy_prompt(subset));
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (attempt == 1) ++out.reasks;
      try {
        return extract_json_array(gateway_.complete(req));
      } catch (const MalformedOutput& e) {
        spdlog::warn("strategy drafting output unparseable: {}", e.what());
      } catch (const Error& e) {
        spdlog::warn("strategy drafting failed: {}", e.what());
        return std::nullopt;
      }
    }
    return std::nullopt;
  };

  std::map<std::size_t, StrategyCard> matched;
  auto absorb = [&](const json& arr, const std::vector<ErrorPattern>& subset) {
    for (const auto& item : arr) {
      if (!item.is_object()) continue;
      const auto name = lower(field(item, "category_name"));
      for (const auto& p : subset) {
        if (matched.count(p.cluster_index) || lower(p.category_name) != name) continue;
        StrategyCard c;
        c.cluster_index = p.cluster_index;
        c.category_name = p.category_name;
        c.error_pattern = p.error_pattern;
        c.representative_samples = p.representative_samples;
        c.strategy_name = field(item, "strategy_name");
        c.generation_approach = field(item, "generation_approach");
        c.key_elements = text_list(item, "key_elements");
        if (c.generation_approach.empty()) break;
        if (c.strategy_name.empty()) c.strategy_name = "Strategy for " + p.category_name;
        matched.emplace(p.cluster_index, std::move(c));
        break;
      }
    }
  };

  auto first = ask(patterns);
  if (!first) {
    out.aborted = true;
    return out;
  }
  absorb(*first, patterns);

  std::vector<ErrorPattern> missing;
  for (const auto& p : patterns)
    if (!matched.count(p.cluster_index)) missing.push_back(p);
  if (!missing.empty()) {
    ++out.retries;
    if (auto second = ask(missing)) absorb(*second, missing);
  }

  for (const auto& p : patterns) {
    auto it = matched.find(p.cluster_index);
    if (it == matched.end()) {
      out.missing_categories.push_back(p.category_name);
      continue;
    }
    out.cards.push_back(std::move(it->second));
  }
  return out;
}

}  // namespace augflow
