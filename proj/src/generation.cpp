#include "augflow/generation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "augflow/errors.hpp"
#include "augflow/json_extract.hpp"
#include "augflow/random.hpp"

namespace augflow {

using nlohmann::json;

json quota_to_json(const QuotaPlan& q) {
  return {{"total", q.total},
          {"pattern_total", q.pattern_total},
          {"error_total", q.error_total},
          {"per_strategy", q.per_strategy}};
}

QuotaPlan quota_from_json(const json& j) {
  return {j.at("total").get<std::size_t>(), j.at("pattern_total").get<std::size_t>(),
          j.at("error_total").get<std::size_t>(), j.at("per_strategy").get<std::vector<std::size_t>>()};
}

QuotaPlan plan_quota(std::size_t train_size, std::size_t k, std::size_t train_error_count, double ratio,
                     double pattern_share) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("quota ratio must lie in (0, 1]");
  if (!(pattern_share >= 0.0 && pattern_share <= 1.0)) throw std::invalid_argument("pattern share must lie in [0, 1]");
  QuotaPlan q;
  q.total = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(train_size)));
  if (k == 0) {
    q.error_total = train_error_count > 0 ? q.total : 0;
    return q;
  }
  if (train_error_count > 0) {
    q.pattern_total = static_cast<std::size_t>(std::ceil(static_cast<double>(q.total) * pattern_share));
    q.error_total = q.total - q.pattern_total;
  } else {
    q.pattern_total = q.total;
  }
  q.per_strategy.assign(k, q.pattern_total / k);
  for (std::size_t i = 0; i < q.pattern_total % k; ++i) ++q.per_strategy[i];
  return q;
}

std::string_view to_string(Branch b) { return b == Branch::pattern ? "pattern" : "error"; }

std::size_t seeds_needed(std::size_t requested, std::size_t per_example) {
  if (per_example == 0) throw std::invalid_argument("num_samples_per_example must be >= 1");
  return (requested + per_example - 1) / per_example;
}

namespace {

std::vector<std::size_t> chunk_sizes(std::size_t total, std::size_t batch_size) {
  std::vector<std::size_t> out;
  for (std::size_t left = total; left > 0;) {
    const auto n = std::min(left, batch_size);
    out.push_back(n);
    left -= n;
  }
  return out;
}

}  // namespace

std::vector<GenerationBatch> plan_pattern_batches(const std::vector<StrategyCard>& cards, const QuotaPlan& quota,
                                                  const Dataset& train_pool, const GenerationConfig& cfg,
                                                  const std::string& id_prefix, std::uint64_t seed) {
  if (cards.size() != quota.per_strategy.size()) {
    throw std::invalid_argument("quota has " + std::to_string(quota.per_strategy.size()) + " slots for " +
                                std::to_string(cards.size()) + " strategies");
  }
  for (const auto& s : train_pool.samples) {
    if (s.split != Split::train) throw ValidationLeak("seed pool contains validation sample " + s.id);
  }
  std::vector<GenerationBatch> out;
  if (train_pool.empty()) return out;
  std::uint64_t stream = 0;
  for (std::size_t k = 0; k < cards.size(); ++k) {
    const auto sizes = chunk_sizes(quota.per_strategy[k], cfg.batch_size);
    for (std::size_t b = 0; b < sizes.size(); ++b) {
      GenerationBatch batch;
      batch.batch_id = id_prefix + "-pat-k" + std::to_string(k) + "-b" + std::to_string(b);
      batch.branch = Branch::pattern;
      batch.strategy = cards[k];
      batch.requested = sizes[b];
      const auto n = seeds_needed(sizes[b], cfg.num_samples_per_example);
      batch.seed_samples = subsample(train_pool, n, derive_seed(seed, stream++)).samples;
      out.push_back(std::move(batch));
    }
  }
  return out;
}

std::vector<GenerationBatch> plan_error_batches(const std::vector<ErrorRecord>& error_pool, std::size_t error_total,
                                                const GenerationConfig& cfg, const std::string& id_prefix,
                                                std::uint64_t seed) {
  for (const auto& e : error_pool) {
    if (e.split != Split::train) throw ValidationLeak("error seed pool contains validation error " + e.sample_id);
  }
  std::vector<GenerationBatch> out;
  if (error_pool.empty()) return out;
  const auto sizes = chunk_sizes(error_total, cfg.batch_size);
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    GenerationBatch batch;
    batch.batch_id = id_prefix + "-err-b" + std::to_string(b);
    batch.branch = Branch::error;
    batch.requested = sizes[b];
    const auto n = seeds_needed(sizes[b], cfg.num_samples_per_example);
    for (auto i : sample_indices(error_pool.size(), n, derive_seed(seed, b))) batch.seed_errors.push_back(error_pool[i]);
    out.push_back(std::move(batch));
  }
  return out;
}

GenerationAgent::GenerationAgent(Gateway& gateway, const PromptLibrary& prompts, GenerationConfig cfg,
                                 const ValidationGuard* guard)
    : gateway_(gateway), prompts_(prompts), cfg_(cfg), guard_(guard) {
  if (cfg_.num_samples_per_example == 0 || cfg_.batch_size == 0) {
    throw ConfigError("generation batch size and samples per example must be >= 1");
  }
}

std::string GenerationAgent::render_prompt(const GenerationBatch& batch) const {
  std::string feedback_block;
  if (batch.feedback && !batch.feedback->empty()) {
    feedback_block = prompts_.get("feedback_block").render({{"feedback", *batch.feedback}});
  }
  if (batch.branch == Branch::pattern) {
    if (!batch.strategy) throw std::invalid_argument("pattern batch without a strategy");
    std::string examples;
    for (const auto& s : batch.seed_samples) {
      json ex = {{"sample_id", s.id}, {"messages", sample_to_json(s)["messages"]}};
      examples += ex.dump() + "\n";
    }
    if (!examples.empty()) examples.pop_back();
    return prompts_.get("generation_pattern")
        .render({{"strategy", card_prompt_view(*batch.strategy).dump(2)},
                 {"examples", examples},
                 {"feedback_block", feedback_block},
                 {"num_samples_per_example", std::to_string(cfg_.num_samples_per_example)},
                 {"strategy_name", batch.strategy->strategy_name}});
  }
  std::string examples;
  for (std::size_t i = 0; i < batch.seed_errors.size(); ++i) {
    const auto& e = batch.seed_errors[i];
    examples += "EXAMPLE " + std::to_string(i + 1) + ":\n";
    examples += "QUESTION/TASK:\n" + e.x + "\n";
    examples += "STUDENT'S WRONG ANSWER:\n" + e.y_hat + "\n";
    examples += "---\n";
  }
  return prompts_.get("generation_error")
      .render({{"examples", examples},
               {"feedback_block", feedback_block},
               {"total_samples", std::to_string(batch.requested)}});
}

GenerationResult GenerationAgent::parse_output(const GenerationBatch& batch, const std::string& raw) const {
  GenerationResult out;
  json arr;
  try {
    arr = extract_json_array(raw);
  } catch (const MalformedOutput& e) {
    spdlog::warn("generation batch {} attempt {}: {}", batch.batch_id, batch.attempt, e.what());
    out.unparseable = true;
    return out;
  }

  std::vector<std::string> seed_ids;
  if (batch.branch == Branch::pattern) {
    for (const auto& s : batch.seed_samples) seed_ids.push_back(s.id);
  } else {
    for (const auto& e : batch.seed_errors) seed_ids.push_back(e.sample_id);
  }
  const std::set<std::string> seed_set(seed_ids.begin(), seed_ids.end());

  std::size_t accepted = 0;
  for (std::size_t j = 0; j < arr.size(); ++j) {
    const auto& item = arr[j];
    Sample s;
    try {
      if (!item.is_object()) throw std::invalid_argument("entry is not an object");
      // Provenance is attached below, so parse the messages as an original.
      json shape = item;
      shape.erase("is_synthetic");
      shape.erase("sample_id");
      shape.erase("id");
      if (shape.contains("based_on_example") && !shape["based_on_example"].is_string()) shape.erase("based_on_example");
      if (shape.contains("based_on_strategy") && !shape["based_on_strategy"].is_string()) {
        shape.erase("based_on_strategy");
      }
      s = sample_from_json(shape, Split::train, "pending");
    } catch (const std::exception& e) {
      spdlog::warn("generation batch {}: dropping malformed entry {}: {}", batch.batch_id, j, e.what());
      ++out.malformed;
      continue;
    }
    if (s.query().empty() || s.answer().empty()) {
      ++out.malformed;
      continue;
    }
    // Our own id keeps synthetic ids unique across batches and attempts.
    s.id = batch.batch_id + "-a" + std::to_string(batch.attempt) + "-" + std::to_string(j);
    s.origin = Origin::synthetic;
    s.split = Split::train;

    if (guard_ && s.based_on_example && guard_->is_validation_id(*s.based_on_example)) {
      spdlog::warn("generation batch {}: entry {} references validation sample {}", batch.batch_id, j,
                   *s.based_on_example);
      ++out.isolation_rejects;
      continue;
    }
    if (!s.based_on_example || !seed_set.count(*s.based_on_example)) {
      if (seed_ids.empty()) {
        ++out.malformed;
        continue;
      }
      // Positional attribution: consecutive groups of per-example outputs.
      const auto per = batch.branch == Branch::pattern ? cfg_.num_samples_per_example : std::size_t{1};
      s.based_on_example = seed_ids[(j / per) % seed_ids.size()];
    }
    if (batch.branch == Branch::pattern) {
      s.based_on_strategy = batch.strategy->strategy_name;
    } else {
      s.based_on_strategy.reset();
    }
    if (guard_) {
      try {
        guard_->check(s);
      } catch (const ValidationLeak& e) {
        spdlog::warn("generation batch {}: {}", batch.batch_id, e.what());
        ++out.isolation_rejects;
        continue;
      }
    }
    if (accepted == batch.requested) {
      ++out.truncated;
      continue;
    }
    out.samples.push_back(std::move(s));
    ++accepted;
  }
  if (accepted < batch.requested) {
    spdlog::info("generation batch {} attempt {}: {} of {} requested samples", batch.batch_id, batch.attempt, accepted,
                 batch.requested);
  }
  return out;
}

GenerationResult GenerationAgent::generate(const GenerationBatch& batch) {
  const auto prompt = render_prompt(batch);
  if (guard_) {
    if (auto leak = guard_->find_leak(prompt)) {
      throw ValidationLeak("generation prompt for " + batch.batch_id + " contains validation content \"" + *leak + "\"");
    }
  }
  GenerationResult out;
  try {
    out = parse_output(batch, gateway_.complete(gateway_.make_request(Purpose::generation, prompt)));
  } catch (const ValidationLeak&) {
    throw;
  } catch (const Error& e) {
    spdlog::warn("generation batch {} attempt {} failed: {}", batch.batch_id, batch.attempt, e.what());
    out.unparseable = true;
  }
  out.prompt = prompt;
  return out;
}

GenerationResult GenerationAgent::generate_pattern_guided(const GenerationBatch& batch) {
  if (batch.branch != Branch::pattern) throw std::invalid_argument("not a pattern-branch batch");
  for (const auto& s : batch.seed_samples) {
    if (s.split != Split::train) throw ValidationLeak("pattern batch seed " + s.id + " is not a training sample");
  }
  return generate(batch);
}

GenerationResult GenerationAgent::generate_error_based(const GenerationBatch& batch) {
  if (batch.branch != Branch::error) throw std::invalid_argument("not an error-branch batch");
  for (const auto& e : batch.seed_errors) {
    if (e.split != Split::train) throw ValidationLeak("error batch seed " + e.sample_id + " is not a training error");
  }
  return generate(batch);
}

}  // namespace augflow
