#include "augflow/providers.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "augflow/errors.hpp"

namespace augflow {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string request_digest(const ChatRequest& req) {
  json msgs = json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.3f", req.temperature);
  const json canonical = {{"purpose", to_string(req.purpose)},
                          {"model", req.model_id},
                          {"temperature", temp},
                          {"max_tokens", req.max_output_tokens},
                          {"messages", msgs}};
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical.dump())));
  return hex;
}

namespace {

struct Endpoint {
  std::string base;    // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint must include a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.base = url.substr(0, slash);
  e.prefix = slash == std::string::npos ? "" : url.substr(slash);
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

std::string resolve_key(const ProviderBinding& b) {
  if (b.api_key_env.empty()) return {};
  const char* v = std::getenv(b.api_key_env.c_str());
  return v ? v : "";
}

json post_json(const ProviderBinding& binding, const std::string& api_key, const std::string& path,
               const json& body) {
  const auto ep = split_endpoint(binding.endpoint);
  httplib::Client cli(ep.base);
  cli.set_connection_timeout(binding.timeout_seconds, 0);
  cli.set_read_timeout(binding.timeout_seconds, 0);
  cli.set_write_timeout(binding.timeout_seconds, 0);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  auto res = cli.Post(ep.prefix + path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("HTTP request to " + binding.endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + binding.endpoint);
  }
  if (res->status < 200 || res->status >= 300) throw ProviderRejected(res->status, res->body.substr(0, 512));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ProviderRejected(res->status, std::string("response is not JSON: ") + e.what());
  }
}

}  // namespace

HttpChatProvider::HttpChatProvider(ProviderBinding binding)
    : binding_(std::move(binding)), api_key_(resolve_key(binding_)) {
  split_endpoint(binding_.endpoint);
}

std::string HttpChatProvider::complete(const ChatRequest& req) {
  json msgs = json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  const json body = {{"model", req.model_id},
                     {"messages", msgs},
                     {"temperature", req.temperature},
                     {"max_tokens", req.max_output_tokens}};
  const auto resp = post_json(binding_, api_key_, "/chat/completions", body);
  const auto choices = resp.find("choices");
  if (choices == resp.end() || !choices->is_array() || choices->empty()) {
    throw ProviderRejected(200, "response has no choices");
  }
  const auto& msg = (*choices)[0].value("message", json::object());
  if (!msg.contains("content") || !msg["content"].is_string()) throw ProviderRejected(200, "choice has no content");
  return msg["content"].get<std::string>();
}

HttpEmbeddingProvider::HttpEmbeddingProvider(ProviderBinding binding)
    : binding_(std::move(binding)), api_key_(resolve_key(binding_)) {
  split_endpoint(binding_.endpoint);
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  const json body = {{"model", binding_.model_id}, {"input", texts}};
  const auto resp = post_json(binding_, api_key_, "/embeddings", body);
  const auto data = resp.find("data");
  if (data == resp.end() || !data->is_array()) throw ProviderRejected(200, "embedding response has no data");
  std::vector<std::vector<double>> out(texts.size());
  for (std::size_t i = 0; i < data->size(); ++i) {
    const auto& item = (*data)[i];
    const auto idx = item.value("index", i);
    if (idx >= out.size()) throw DimensionMismatch("embedding index out of range");
    out[idx] = item.at("embedding").get<std::vector<double>>();
  }
  return out;
}

ReplayChatProvider::ReplayChatProvider(std::filesystem::path dir, std::shared_ptr<ChatProvider> fallback, bool record)
    : dir_(std::move(dir)), fallback_(std::move(fallback)), record_(record) {
  if (record_) std::filesystem::create_directories(dir_);
}

std::string ReplayChatProvider::complete(const ChatRequest& req) {
  const auto digest = request_digest(req);
  const auto path = dir_ / (digest + ".txt");
  if (std::ifstream in{path, std::ios::binary}) {
    std::ostringstream ss;
    ss << in.rdbuf();
    std::lock_guard lock(mu_);
    ++hits_;
    return ss.str();
  }
  {
    std::lock_guard lock(mu_);
    ++misses_;
  }
  if (!fallback_) throw ReplayMiss(digest);
  auto text = fallback_->complete(req);
  if (record_) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write replay fixture " + path.string());
  }
  return text;
}

std::size_t ReplayChatProvider::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t ReplayChatProvider::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

std::vector<double> HashEmbedder::embed_one(const std::string& text) const {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));

  std::vector<double> v(dim_, 0.0);
  const auto basis = fnv1a64(std::to_string(seed_));
  auto add = [&](const std::string& feature) {
    const auto h = fnv1a64(feature, basis);
    v[h % dim_] += (h >> 63) ? 1.0 : -1.0;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + ' ' + tokens[i + 1]);
  }
  if (tokens.empty()) add(text);

  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) {
    // Every feature cancelled out; fall back to a single deterministic bucket.
    v[fnv1a64(text, basis) % dim_] = 1.0;
    return v;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> HashEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

}  // namespace augflow
