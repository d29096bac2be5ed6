#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace augflow {

enum class Purpose { error_analysis, categorization, strategy, generation, quality_control, student_eval };

inline constexpr std::array<Purpose, 6> kAllPurposes = {
    Purpose::error_analysis, Purpose::categorization,  Purpose::strategy,
    Purpose::generation,     Purpose::quality_control, Purpose::student_eval};

std::string_view to_string(Purpose p);
Purpose parse_purpose(std::string_view s);

/// Sampling temperature mandated for a purpose: 0.7 for data generation, 0 otherwise.
double temperature_for(Purpose p);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 4096;
  std::string model_id;
  Purpose purpose = Purpose::student_eval;
};

/// Throws std::invalid_argument when the request breaks the purpose/temperature rule.
void check_request(const ChatRequest& req);

struct RetryPolicy {
  int max_attempts = 3;
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500), std::chrono::milliseconds(1000),
                                                 std::chrono::milliseconds(2000)};

  std::chrono::milliseconds delay_before(int attempt) const;
};

struct ProviderBinding {
  std::string endpoint;
  std::string model_id;
  /// Name of the environment variable holding the API key; empty for none.
  std::string api_key_env;
  int max_concurrency = 4;
  int max_output_tokens = 4096;
  int timeout_seconds = 120;
  RetryPolicy retry;
};

nlohmann::json binding_to_json(const ProviderBinding& b);
ProviderBinding binding_from_json(const nlohmann::json& j, const ProviderBinding& defaults = {});

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  /// Raw model text. Throws TransportError for retryable failures and
  /// ProviderRejected / ReplayMiss for permanent ones.
  virtual std::string complete(const ChatRequest& req) = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

/// Outcome of one slot of complete_batch.
struct BatchItem {
  std::optional<std::string> text;
  std::string error;

  bool ok() const { return text.has_value(); }
};

struct PurposeStats {
  std::size_t calls = 0;     // logical invocations
  std::size_t attempts = 0;  // transport attempts including retries
  std::size_t failures = 0;  // invocations that ended in an error
  std::size_t max_in_flight = 0;
};

struct RecordedRequest {
  Purpose purpose;
  std::string model_id;
  double temperature;
  std::string prompt;
};

/// Single entry point for every model call made by the pipeline.
///
/// Routes each purpose to a provider binding, enforces the temperature rule,
/// retries transient failures, bounds per-purpose concurrency and keeps call
/// counters plus a log of every outgoing request. Safe for concurrent use.
class Gateway {
 public:
  Gateway() = default;
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void bind(Purpose p, ProviderBinding binding, std::shared_ptr<ChatProvider> provider);
  void bind_embedder(std::shared_ptr<EmbeddingProvider> provider, RetryPolicy retry = {});

  bool has_binding(Purpose p) const;
  ProviderBinding binding(Purpose p) const;

  /// When set, check_bindings() requires the judge model to differ from the
  /// models used for analysis and generation.
  void set_distinct_judge(bool on) { distinct_judge_ = on; }
  void check_bindings() const;

  /// Request with the bound model and the purpose's temperature.
  ChatRequest make_request(Purpose p, std::string user_prompt) const;

  std::string complete(const ChatRequest& req);

  /// All requests must share a purpose. Results are positional; a failed slot
  /// does not affect its siblings.
  std::vector<BatchItem> complete_batch(const std::vector<ChatRequest>& reqs);

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

  PurposeStats stats(Purpose p) const;
  std::size_t embedding_calls() const;
  std::vector<RecordedRequest> request_log() const;
  void reset_stats();

 private:
  struct Route {
    ProviderBinding binding;
    std::shared_ptr<ChatProvider> provider;
  };

  Route route(Purpose p) const;
  void acquire(Purpose p, int limit);
  void release(Purpose p);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<Purpose, Route> routes_;
  std::map<Purpose, PurposeStats> stats_;
  std::map<Purpose, std::size_t> in_flight_;
  std::vector<RecordedRequest> log_;
  std::shared_ptr<EmbeddingProvider> embedder_;
  RetryPolicy embed_retry_;
  std::size_t embedding_calls_ = 0;
  bool distinct_judge_ = false;
};

}  // namespace augflow
