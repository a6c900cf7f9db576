#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtle/corpus.hpp"
#include "mtle/masker.hpp"
#include "mtle/prompts.hpp"

namespace mtle {

struct DecodeParams {
  double temperature = 1.0;
  int max_output_tokens = 256;
};

struct ChatExchange {
  std::string system_text;
  std::string user_text;  // must be non-empty
  DecodeParams decode;
};

enum class BackendKind { kHttpChatService, kMock };

struct BackendConfig {
  BackendKind kind = BackendKind::kMock;
  std::string endpoint_url;  // full URL of a chat-completions endpoint
  std::string model_name = "gpt-3.5-turbo";
  // Name of the environment variable holding the bearer token. The value
  // itself never enters configs, logs, or reports.
  std::string api_key_env = "OPENAI_API_KEY";
  int max_retries = 3;
  std::chrono::milliseconds request_timeout{30000};
  std::chrono::milliseconds retry_base_delay{500};
  int max_concurrent_requests = 4;
  // Dispatch pacing for the HTTP transport; the mock backend is local
  // and is not paced.
  int requests_per_minute_cap = 600;
  std::optional<std::string> cache_path;     // response cache / resume checkpoint
  std::optional<std::string> fixtures_path;  // mock backend script
  std::optional<std::string> audit_path;     // raw exchange log

  void validate() const;  // throws std::invalid_argument
};

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Network failures and HTTP 429/5xx; retried with backoff.
struct TransientBackendError : GatewayError {
  using GatewayError::GatewayError;
};
// HTTP 401/403; never retried.
struct AuthError : GatewayError {
  using GatewayError::GatewayError;
};
// Transient failures persisted through every retry.
struct BackendExhaustedError : GatewayError {
  using GatewayError::GatewayError;
};

// One backend request/response, without retry or caching policy.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const ChatExchange& exchange) = 0;
};

std::unique_ptr<ChatTransport> make_http_transport(const BackendConfig& config);
std::unique_ptr<ChatTransport> make_mock_transport(const BackendConfig& config);

struct FillResult {
  struct DroppedFill {
    std::string fill;
    MoralLabel intended_label;
    std::string reason;
  };
  std::vector<std::string> acceptable_fills;    // at most 3, sanitized
  std::vector<std::string> unacceptable_fills;  // at most 3, sanitized
  std::vector<DroppedFill> dropped;
  bool failed = false;  // zero parsable fills after retries
  std::string failure_reason;
};

struct RelabelResult {
  MoralLabel verdict = MoralLabel::kIndistinguishable;
  // True when the backend never produced a parsable digit; the verdict is
  // then Indistinguishable and the caller records disposition
  // "relabel_unparsable".
  bool unparsable = false;
};

struct GatewayCounters {
  // Logical operation counts; invariant under caching.
  std::uint64_t generation_calls = 0;
  std::uint64_t relabel_calls = 0;
  std::uint64_t classify_calls = 0;
  std::uint64_t paraphrase_calls = 0;
  // Transport-level accounting.
  std::uint64_t transport_requests = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t transport_retries = 0;
  std::uint64_t parse_retries = 0;
};

// Uniform gated access to a chat backend: response cache, retry with
// exponential backoff, a concurrency bound, and request pacing. Safe to
// share across worker threads.
class LlmGateway {
 public:
  explicit LlmGateway(BackendConfig config, PromptSet prompts = PromptSet::defaults());
  ~LlmGateway();

  LlmGateway(const LlmGateway&) = delete;
  LlmGateway& operator=(const LlmGateway&) = delete;

  // Cache-aware completion with retry; the assistant message text.
  std::string complete(const ChatExchange& exchange);

  // Asks for 3 + 3 fills for the template's placeholder and sanitizes
  // the parsed arrays. Parse failures re-ask with a corrective
  // instruction up to max_retries.
  FillResult generate_fills(const MaskTemplate& tmpl);

  // Single-digit moral verdict for a reconstructed sentence.
  RelabelResult relabel(const std::string& sentence);

  // One-shot binary classification with a single labeled exemplar.
  // Throws BackendExhaustedError when no parsable answer emerges; the
  // eval harness records that as an abstention.
  MoralLabel one_shot_classify(const std::string& sentence, const std::string& exemplar_text,
                               MoralLabel exemplar_label);

  // Up to 3 label-preserving paraphrases; nullopt when the response
  // never parsed (the caller skips the sentence).
  std::optional<std::vector<std::string>> generate_paraphrases(const std::string& sentence);

  GatewayCounters counters() const;
  const PromptSet& prompts() const;
  const BackendConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mtle
