#include "augflow/quality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "augflow/errors.hpp"
#include "augflow/json_extract.hpp"

namespace augflow {

using nlohmann::json;

namespace {

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::optional<double> as_rating(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    try {
      std::size_t used = 0;
      const auto s = j.get<std::string>();
      const double v = std::stod(s, &used);
      return v;
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

QualityVerdict rejected(int attempt, const std::string& why) {
  QualityVerdict v;
  v.attempt = attempt;
  v.accepted = false;
  v.feedback = why;
  v.flags.push_back(why);
  return v;
}

}  // namespace

json verdict_to_json(const QualityVerdict& v) {
  json ratings = json::array();
  for (const auto& r : v.per_sample) {
    ratings.push_back({{"sample_id", r.sample_id}, {"quality_rating", r.quality_rating}, {"feedback", r.feedback}});
  }
  return {{"attempt", v.attempt},    {"batch_score", v.batch_score}, {"accepted", v.accepted},
          {"per_sample", ratings}, {"feedback", v.feedback},       {"flags", v.flags}};
}

QualityVerdict make_verdict(std::vector<SampleRating> ratings, double threshold, int attempt) {
  QualityVerdict v;
  v.attempt = attempt;
  v.per_sample = std::move(ratings);
  if (v.per_sample.empty()) return v;
  double sum = 0.0;
  for (const auto& r : v.per_sample) sum += r.quality_rating;
  v.batch_score = sum / static_cast<double>(v.per_sample.size());
  v.accepted = v.batch_score >= threshold;
  return v;
}

QualityAgent::QualityAgent(Gateway& gateway, const PromptLibrary& prompts, QualityConfig cfg)
    : gateway_(gateway), prompts_(prompts), cfg_(cfg) {
  if (cfg_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

std::string QualityAgent::render_prompt(const std::vector<std::pair<Sample, Sample>>& pairs,
                                        const std::vector<StrategyCard>& strategies) const {
  std::string strat;
  if (strategies.empty()) {
    strat = "None (samples target the student's training errors; judge correctness, utility and relevance only)";
  } else {
    json arr = json::array();
    for (const auto& c : strategies) arr.push_back(card_prompt_view(c));
    strat = arr.dump(2);
  }
  std::string lines;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [orig, syn] = pairs[i];
    lines += "PAIR " + std::to_string(i + 1) + ":\n";
    json o = {{"sample_id", orig.id}, {"type", "original"}, {"messages", sample_to_json(orig)["messages"]}};
    json s = {{"sample_id", syn.id}, {"type", "synthetic"}, {"messages", sample_to_json(syn)["messages"]}};
    lines += o.dump() + "\n" + s.dump() + "\n---\n";
  }
  if (!lines.empty()) lines.pop_back();
  return prompts_.get("quality_control").render({{"strategies", strat}, {"pairs", lines}});
}

QualityVerdict QualityAgent::review_batch(const std::vector<std::pair<Sample, Sample>>& pairs,
                                          const std::vector<StrategyCard>& strategies, int attempt) {
  if (pairs.empty()) return rejected(attempt, "no synthetic samples to review");
  const auto req = gateway_.make_request(Purpose::quality_control, render_prompt(pairs, strategies));

  json arr;
  try {
    arr = extract_json_array(gateway_.complete(req));
  } catch (const MalformedOutput&) {
    return rejected(attempt, "judge output unparseable");
  } catch (const Error& e) {
    return rejected(attempt, std::string("judge call failed: ") + e.what());
  }

  std::map<std::string, std::size_t> synthetic_pos;
  std::map<std::string, std::size_t> original_pos;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    synthetic_pos.emplace(pairs[i].second.id, i);
    original_pos.emplace(pairs[i].first.id, i);
  }

  std::vector<std::string> flags;
  std::map<std::size_t, SampleRating> by_pos;
  std::vector<std::string> notes;
  for (const auto& item : arr) {
    if (!item.is_object()) continue;
    const auto id = item.contains("sample_id") && item["sample_id"].is_string() ? item["sample_id"].get<std::string>()
                                                                                : std::string{};
    const auto type = item.value("type", std::string{});
    const auto feedback = item.contains("feedback") && item["feedback"].is_string()
                              ? item["feedback"].get<std::string>()
                              : std::string{};
    auto it = synthetic_pos.find(id);
    if (type == "original" || it == synthetic_pos.end()) {
      if (!feedback.empty() && (type == "original" || original_pos.count(id))) {
        notes.push_back("- " + id + " (original): " + feedback);
      }
      continue;
    }
    const auto raw = item.contains("quality_rating") ? as_rating(item["quality_rating"]) : std::nullopt;
    if (!raw) {
      flags.push_back("missing rating for " + id);
      continue;
    }
    long rating = std::lround(*raw);
    if (rating < 1 || rating > 10) {
      flags.push_back("rating " + format_score(*raw) + " for " + id + " clamped");
      rating = std::clamp(rating, 1L, 10L);
    }
    if (by_pos.count(it->second)) continue;
    by_pos.emplace(it->second, SampleRating{id, static_cast<int>(rating), feedback});
  }
  for (const auto& [id, pos] : synthetic_pos) {
    if (!by_pos.count(pos) && std::find(flags.begin(), flags.end(), "missing rating for " + id) == flags.end()) {
      flags.push_back("missing rating for " + id);
    }
  }
  if (by_pos.empty()) {
    auto v = rejected(attempt, "judge output unparseable");
    v.flags.insert(v.flags.end(), flags.begin(), flags.end());
    return v;
  }

  std::vector<SampleRating> ratings;
  for (auto& [pos, r] : by_pos) ratings.push_back(std::move(r));
  auto v = make_verdict(std::move(ratings), cfg_.threshold, attempt);
  v.flags = std::move(flags);

  std::string fb = "Batch quality score " + format_score(v.batch_score) + "/10 (threshold " +
                   format_score(cfg_.threshold) + ").\n";
  for (const auto& r : v.per_sample) {
    fb += "- " + r.sample_id + " (rating " + std::to_string(r.quality_rating) + "): " + r.feedback + "\n";
  }
  for (const auto& n : notes) fb += n + "\n";
  fb.pop_back();
  v.feedback = std::move(fb);
  return v;
}

json gate_to_json(const GateOutcome& g) {
  json hist = json::array();
  for (const auto& a : g.history) {
    hist.push_back({{"attempt", a.attempt},
                    {"produced", a.produced},
                    {"batch_score", a.batch_score},
                    {"accepted", a.accepted},
                    {"feedback", a.feedback},
                    {"flags", a.flags}});
  }
  return {{"batch_id", g.batch_id},
          {"branch", to_string(g.branch)},
          {"accepted_samples", g.accepted_samples.size()},
          {"dropped", g.dropped},
          {"attempts", hist}};
}

GateOutcome qc_gate(const BatchProducer& producer, GenerationBatch batch, QualityAgent& judge,
                    const OriginalLookup& originals, std::optional<GenerationResult> first) {
  const auto& cfg = judge.config();
  GateOutcome out;
  out.batch_id = batch.batch_id;
  out.branch = batch.branch;

  std::vector<StrategyCard> strategies;
  if (batch.branch == Branch::pattern && batch.strategy) strategies.push_back(*batch.strategy);

  std::vector<Sample> last_samples;
  for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    batch.attempt = attempt;
    GenerationResult gen;
    if (attempt == 1 && first) {
      gen = std::move(*first);
    } else {
      gen = producer(batch);
    }

    std::vector<std::pair<Sample, Sample>> pairs;
    std::vector<Sample> kept;
    for (auto& s : gen.samples) {
      const Sample* orig = s.based_on_example ? originals(*s.based_on_example) : nullptr;
      if (!orig) {
        spdlog::warn("batch {}: no original for synthetic sample {}", batch.batch_id, s.id);
        continue;
      }
      pairs.emplace_back(*orig, s);
      kept.push_back(s);
    }

    QualityVerdict v;
    if (pairs.empty()) {
      v.attempt = attempt;
      v.feedback = gen.unparseable ? "Previous output could not be parsed as a JSON array of samples."
                                   : "Previous output contained no usable one-turn samples.";
      v.flags.push_back("no usable samples");
    } else {
      v = judge.review_batch(pairs, strategies, attempt);
    }
    AttemptRecord rec{attempt, kept.size(), v.batch_score, v.accepted, v.feedback, v.flags};
    if (gen.isolation_rejects > 0) {
      rec.flags.push_back(std::to_string(gen.isolation_rejects) + " sample(s) rejected by validation isolation");
    }
    if (gen.malformed > 0) rec.flags.push_back(std::to_string(gen.malformed) + " malformed sample(s) dropped");
    out.history.push_back(std::move(rec));

    if (v.accepted) {
      out.accepted_samples = std::move(kept);
      return out;
    }
    last_samples = std::move(kept);
    batch.feedback = v.feedback;
  }

  if (cfg.accept_last_attempt && !last_samples.empty()) {
    out.accepted_samples = std::move(last_samples);
    return out;
  }
  out.dropped = true;
  return out;
}

}  // namespace augflow
