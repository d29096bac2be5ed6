#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "augflow/gateway.hpp"

namespace augflow {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Stable hex digest over everything that determines a model response:
/// purpose, model id, temperature, token limit and messages.
std::string request_digest(const ChatRequest& req);

/// OpenAI-compatible chat-completions client (POST <endpoint>/chat/completions).
class HttpChatProvider final : public ChatProvider {
 public:
  explicit HttpChatProvider(ProviderBinding binding);
  std::string complete(const ChatRequest& req) override;

 private:
  ProviderBinding binding_;
  std::string api_key_;
};

/// OpenAI-compatible embeddings client (POST <endpoint>/embeddings).
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(ProviderBinding binding);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  ProviderBinding binding_;
  std::string api_key_;
};

/// Answers from a directory of "<digest>.txt" fixture files.
///
/// On a miss the request is forwarded to `fallback` when one is set; with
/// `record` enabled the fallback's answer is written back as a new fixture.
/// Without a fallback a miss throws ReplayMiss.
class ReplayChatProvider final : public ChatProvider {
 public:
  explicit ReplayChatProvider(std::filesystem::path dir, std::shared_ptr<ChatProvider> fallback = nullptr,
                              bool record = false);
  std::string complete(const ChatRequest& req) override;

  std::size_t hits() const;
  std::size_t misses() const;

 private:
  std::filesystem::path dir_;
  std::shared_ptr<ChatProvider> fallback_;
  bool record_;
  mutable std::mutex mu_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Deterministic offline embedder: signed feature hashing of lower-cased word
/// unigrams and bigrams into `dim` buckets, unit-normalised.
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dim = 256, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::vector<double> embed_one(const std::string& text) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

}  // namespace augflow
