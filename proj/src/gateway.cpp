#include "augflow/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>

#include <spdlog/spdlog.h>

#include "augflow/errors.hpp"

namespace augflow {

std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::error_analysis:
      return "error_analysis";
    case Purpose::categorization:
      return "categorization";
    case Purpose::strategy:
      return "strategy";
    case Purpose::generation:
      return "generation";
    case Purpose::quality_control:
      return "quality_control";
    case Purpose::student_eval:
      return "student_eval";
  }
  return "student_eval";
}

Purpose parse_purpose(std::string_view s) {
  for (auto p : kAllPurposes)
    if (to_string(p) == s) return p;
  throw std::invalid_argument("unknown purpose: " + std::string(s));
}

double temperature_for(Purpose p) { return p == Purpose::generation ? 0.7 : 0.0; }

void check_request(const ChatRequest& req) {
  if (req.temperature != temperature_for(req.purpose)) {
    throw std::invalid_argument("temperature " + std::to_string(req.temperature) + " not allowed for purpose " +
                                std::string(to_string(req.purpose)));
  }
  if (req.messages.empty()) throw std::invalid_argument("request has no messages");
}

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  // attempt is 1-based; the first attempt has no delay.
  if (attempt <= 1 || backoff.empty()) return std::chrono::milliseconds(0);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(attempt - 2), backoff.size() - 1);
  return backoff[i];
}

nlohmann::json binding_to_json(const ProviderBinding& b) {
  nlohmann::json backoff = nlohmann::json::array();
  for (auto d : b.retry.backoff) backoff.push_back(d.count());
  return {{"endpoint", b.endpoint},
          {"model_id", b.model_id},
          {"api_key_env", b.api_key_env},
          {"max_concurrency", b.max_concurrency},
          {"max_output_tokens", b.max_output_tokens},
          {"timeout_seconds", b.timeout_seconds},
          {"retry", {{"max_attempts", b.retry.max_attempts}, {"backoff_ms", backoff}}}};
}

ProviderBinding binding_from_json(const nlohmann::json& j, const ProviderBinding& defaults) {
  ProviderBinding b = defaults;
  b.endpoint = j.value("endpoint", b.endpoint);
  b.model_id = j.value("model_id", b.model_id);
  b.api_key_env = j.value("api_key_env", b.api_key_env);
  b.max_concurrency = j.value("max_concurrency", b.max_concurrency);
  b.max_output_tokens = j.value("max_output_tokens", b.max_output_tokens);
  b.timeout_seconds = j.value("timeout_seconds", b.timeout_seconds);
  if (auto r = j.find("retry"); r != j.end()) {
    b.retry.max_attempts = r->value("max_attempts", b.retry.max_attempts);
    if (auto bo = r->find("backoff_ms"); bo != r->end()) {
      b.retry.backoff.clear();
      for (const auto& v : *bo) b.retry.backoff.emplace_back(v.get<long>());
    }
  }
  if (b.max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
  if (b.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  return b;
}

void Gateway::bind(Purpose p, ProviderBinding binding, std::shared_ptr<ChatProvider> provider) {
  if (!provider) throw std::invalid_argument("null provider");
  std::lock_guard lock(mu_);
  routes_[p] = Route{std::move(binding), std::move(provider)};
}

void Gateway::bind_embedder(std::shared_ptr<EmbeddingProvider> provider, RetryPolicy retry) {
  std::lock_guard lock(mu_);
  embedder_ = std::move(provider);
  embed_retry_ = std::move(retry);
}

bool Gateway::has_binding(Purpose p) const {
  std::lock_guard lock(mu_);
  return routes_.count(p) > 0;
}

ProviderBinding Gateway::binding(Purpose p) const { return route(p).binding; }

Gateway::Route Gateway::route(Purpose p) const {
  std::lock_guard lock(mu_);
  auto it = routes_.find(p);
  if (it == routes_.end()) throw ConfigError("no provider bound for purpose " + std::string(to_string(p)));
  return it->second;
}

void Gateway::check_bindings() const {
  if (!distinct_judge_) return;
  const auto judge = binding(Purpose::quality_control).model_id;
  for (auto p : {Purpose::error_analysis, Purpose::categorization, Purpose::strategy, Purpose::generation}) {
    if (has_binding(p) && binding(p).model_id == judge) {
      throw ConfigError("distinct_judge is set but quality_control and " + std::string(to_string(p)) +
                        " both use model " + judge);
    }
  }
}

ChatRequest Gateway::make_request(Purpose p, std::string user_prompt) const {
  const auto b = binding(p);
  ChatRequest req;
  req.purpose = p;
  req.model_id = b.model_id;
  req.temperature = temperature_for(p);
  req.max_output_tokens = b.max_output_tokens;
  req.messages.push_back({"user", std::move(user_prompt)});
  return req;
}

void Gateway::acquire(Purpose p, int limit) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_[p] < static_cast<std::size_t>(limit); });
  auto& n = ++in_flight_[p];
  auto& st = stats_[p];
  st.max_in_flight = std::max(st.max_in_flight, n);
}

void Gateway::release(Purpose p) {
  {
    std::lock_guard lock(mu_);
    --in_flight_[p];
  }
  cv_.notify_all();
}

std::string Gateway::complete(const ChatRequest& req) {
  check_request(req);
  const auto r = route(req.purpose);
  {
    std::lock_guard lock(mu_);
    ++stats_[req.purpose].calls;
    log_.push_back({req.purpose, req.model_id, req.temperature, req.messages.back().content});
  }

  const auto& policy = r.binding.retry;
  for (int attempt = 1;; ++attempt) {
    if (auto d = policy.delay_before(attempt); d.count() > 0) std::this_thread::sleep_for(d);
    acquire(req.purpose, r.binding.max_concurrency);
    {
      std::lock_guard lock(mu_);
      ++stats_[req.purpose].attempts;
    }
    try {
      auto text = r.provider->complete(req);
      release(req.purpose);
      return text;
    } catch (const TransportError& e) {
      release(req.purpose);
      if (attempt >= policy.max_attempts) {
        std::lock_guard lock(mu_);
        ++stats_[req.purpose].failures;
        throw;
      }
      spdlog::warn("{} request failed (attempt {}/{}): {}", to_string(req.purpose), attempt, policy.max_attempts,
                   e.what());
    } catch (...) {
      release(req.purpose);
      std::lock_guard lock(mu_);
      ++stats_[req.purpose].failures;
      throw;
    }
  }
}

std::vector<BatchItem> Gateway::complete_batch(const std::vector<ChatRequest>& reqs) {
  std::vector<BatchItem> out(reqs.size());
  if (reqs.empty()) return out;
  const auto purpose = reqs.front().purpose;
  for (const auto& r : reqs) {
    if (r.purpose != purpose) throw std::invalid_argument("complete_batch requires a single purpose");
  }
  const auto limit = static_cast<std::size_t>(route(purpose).binding.max_concurrency);
  const auto workers = std::min(limit, reqs.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (auto i = next++; i < reqs.size(); i = next++) {
      try {
        out[i].text = complete(reqs[i]);
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  if (workers == 1) {
    work();
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return out;
}

std::vector<std::vector<double>> Gateway::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  std::shared_ptr<EmbeddingProvider> provider;
  RetryPolicy policy;
  {
    std::lock_guard lock(mu_);
    if (!embedder_) throw ConfigError("no embedding provider bound");
    provider = embedder_;
    policy = embed_retry_;
    ++embedding_calls_;
  }
  for (const auto& t : texts) {
    if (t.empty()) throw std::invalid_argument("cannot embed an empty string");
  }
  for (int attempt = 1;; ++attempt) {
    if (auto d = policy.delay_before(attempt); d.count() > 0) std::this_thread::sleep_for(d);
    try {
      auto vecs = provider->embed(texts);
      if (vecs.size() != texts.size()) {
        throw DimensionMismatch("embedding provider returned " + std::to_string(vecs.size()) + " vectors for " +
                                std::to_string(texts.size()) + " texts");
      }
      for (const auto& v : vecs) {
        if (v.size() != vecs.front().size()) throw DimensionMismatch("embedding provider returned ragged vectors");
      }
      return vecs;
    } catch (const TransportError&) {
      if (attempt >= policy.max_attempts) throw;
    }
  }
}

PurposeStats Gateway::stats(Purpose p) const {
  std::lock_guard lock(mu_);
  auto it = stats_.find(p);
  return it == stats_.end() ? PurposeStats{} : it->second;
}

std::size_t Gateway::embedding_calls() const {
  std::lock_guard lock(mu_);
  return embedding_calls_;
}

std::vector<RecordedRequest> Gateway::request_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

void Gateway::reset_stats() {
  std::lock_guard lock(mu_);
  stats_.clear();
  log_.clear();
  embedding_calls_ = 0;
}

}  // namespace augflow
