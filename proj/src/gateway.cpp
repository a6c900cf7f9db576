#include "mtle/gateway.hpp"

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mtle/text.hpp"

namespace mtle {

namespace {

using nlohmann::json;

constexpr std::uint64_t kRequestDigestSeed = 0x9e3779b97f4a7c15ULL;

class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}
  void acquire() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }
  void release() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int count_;
};

struct SemaphoreGuard {
  explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  Semaphore& sem;
};

// Paces request dispatch so no window ever sees more than the configured
// requests per minute.
class RateLimiter {
 public:
  explicit RateLimiter(int requests_per_minute)
      : interval_(requests_per_minute > 0 ? 60'000'000 / requests_per_minute : 0) {}

  void acquire() {
    if (interval_.count() == 0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      if (next_ < now) next_ = now;
      slot = next_;
      next_ += interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  std::mutex mutex_;
  std::chrono::microseconds interval_;
  std::chrono::steady_clock::time_point next_{};
};

std::string trim_ws(std::string_view s) {
  // ASCII whitespace plus the ideographic space U+3000.
  static constexpr const char* kFullWidthSpace = "\xE3\x80\x80";
  std::size_t begin = 0;
  std::size_t end = s.size();
  auto is_ascii_ws = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (begin < end) {
    if (is_ascii_ws(s[begin])) {
      ++begin;
    } else if (end - begin >= 3 && s.substr(begin, 3) == kFullWidthSpace) {
      begin += 3;
    } else {
      break;
    }
  }
  while (end > begin) {
    if (is_ascii_ws(s[end - 1])) {
      --end;
    } else if (end - begin >= 3 && s.substr(end - 3, 3) == kFullWidthSpace) {
      end -= 3;
    } else {
      break;
    }
  }
  return std::string(s.substr(begin, end - begin));
}

// Strict JSON extraction: the trimmed response itself, or the contents of
// a single markdown code fence.
std::optional<json> parse_structured(const std::string& raw) {
  std::string body = trim_ws(raw);
  if (body.rfind("```", 0) == 0) {
    std::size_t start = body.find('\n');
    std::size_t end = body.rfind("```");
    if (start != std::string::npos && end != std::string::npos && end > start) {
      body = trim_ws(body.substr(start + 1, end - start - 1));
    }
  }
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) return std::nullopt;
  return doc;
}

std::optional<int> parse_digit(const std::string& raw, int max_value) {
  const std::string t = trim_ws(raw);
  if (t.size() != 1 || t[0] < '0' || t[0] > '0' + max_value) return std::nullopt;
  return t[0] - '0';
}

std::string canonical_request(const BackendConfig& config, const ChatExchange& exchange) {
  std::ostringstream out;
  out << config.model_name << '\x1f' << exchange.system_text << '\x1f' << exchange.user_text
      << '\x1f' << exchange.decode.temperature << '\x1f' << exchange.decode.max_output_tokens;
  return out.str();
}

}  // namespace

void BackendConfig::validate() const {
  if (kind == BackendKind::kHttpChatService) {
    if (endpoint_url.empty()) {
      throw std::invalid_argument("http backend requires an endpoint URL");
    }
    if (api_key_env.empty()) {
      throw std::invalid_argument("http backend requires an API key environment variable name");
    }
  }
  if (kind == BackendKind::kMock && !fixtures_path) {
    throw std::invalid_argument("mock backend requires a fixtures file");
  }
  if (max_retries < 0) throw std::invalid_argument("max_retries must be nonnegative");
  if (max_concurrent_requests <= 0) {
    throw std::invalid_argument("max_concurrent_requests must be positive");
  }
  if (requests_per_minute_cap <= 0) {
    throw std::invalid_argument("requests_per_minute_cap must be positive");
  }
}

struct LlmGateway::Impl {
  BackendConfig config;
  PromptSet prompt_set;
  std::unique_ptr<ChatTransport> transport;
  Semaphore concurrency;
  RateLimiter pacing;

  std::mutex cache_mutex;
  // key hash -> (request digest, response); the digest disambiguates any
  // key-hash collision.
  std::unordered_map<std::string, std::vector<std::pair<std::string, std::string>>> cache;
  std::ofstream cache_out;

  std::mutex audit_mutex;
  std::ofstream audit_out;

  std::atomic<std::uint64_t> generation_calls{0};
  std::atomic<std::uint64_t> relabel_calls{0};
  std::atomic<std::uint64_t> classify_calls{0};
  std::atomic<std::uint64_t> paraphrase_calls{0};
  std::atomic<std::uint64_t> transport_requests{0};
  std::atomic<std::uint64_t> cache_hits{0};
  std::atomic<std::uint64_t> transport_retries{0};
  std::atomic<std::uint64_t> parse_retries{0};

  Impl(BackendConfig cfg, PromptSet prompts)
      : config(std::move(cfg)),
        prompt_set(std::move(prompts)),
        concurrency(config.max_concurrent_requests),
        pacing(config.requests_per_minute_cap) {
    config.validate();
    transport = config.kind == BackendKind::kMock ? make_mock_transport(config)
                                                  : make_http_transport(config);
    if (config.cache_path) {
      ensure_parent_dir(*config.cache_path);
      load_cache(*config.cache_path);
    }
    if (config.audit_path) {
      ensure_parent_dir(*config.audit_path);
      audit_out.open(*config.audit_path, std::ios::binary | std::ios::app);
      if (!audit_out) {
        throw std::invalid_argument("cannot open audit log: " + *config.audit_path);
      }
    }
  }

  static void ensure_parent_dir(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
  }

  void load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        // A record cut short by a killed run is skipped, not fatal.
        if (rec.is_discarded() || !rec.contains("key") || !rec.contains("request_digest") ||
            !rec.contains("response")) {
          continue;
        }
        cache[rec.at("key").get<std::string>()].emplace_back(
            rec.at("request_digest").get<std::string>(), rec.at("response").get<std::string>());
      }
    }
    cache_out.open(path, std::ios::binary | std::ios::app);
    if (!cache_out) throw std::invalid_argument("cannot open cache file: " + path);
  }

  std::optional<std::string> cache_lookup(const std::string& key, const std::string& digest) {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto it = cache.find(key);
    if (it == cache.end()) return std::nullopt;
    for (const auto& [d, response] : it->second) {
      if (d == digest) return response;
    }
    return std::nullopt;
  }

  void cache_store(const std::string& key, const std::string& digest,
                   const std::string& response) {
    if (!config.cache_path) return;
    std::lock_guard<std::mutex> lock(cache_mutex);
    cache[key].emplace_back(digest, response);
    json rec{{"key", key},
             {"request_digest", digest},
             {"response", response},
             {"ts", std::chrono::duration_cast<std::chrono::seconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count()}};
    cache_out << rec.dump() << '\n';
    cache_out.flush();  // the cache doubles as the resume checkpoint
  }

  void audit(const char* op, const ChatExchange& exchange, const std::string& response,
             int attempts, bool cached) {
    if (!audit_out.is_open()) return;
    json rec{{"op", op},
             {"system", exchange.system_text},
             {"user", exchange.user_text},
             {"response", response},
             {"attempts", attempts},
             {"cached", cached}};
    std::lock_guard<std::mutex> lock(audit_mutex);
    audit_out << rec.dump() << '\n';
    audit_out.flush();
  }

  std::chrono::milliseconds backoff_delay(int attempt) {
    const auto base = config.retry_base_delay.count();
    const long long scaled = base << std::min(attempt, 6);
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_int_distribution<long long> jitter(0, std::max<long long>(1, scaled / 2));
    return std::chrono::milliseconds(std::min<long long>(scaled + jitter(rng), 60'000));
  }

  std::string complete(const ChatExchange& exchange, const char* op) {
    if (exchange.user_text.empty()) throw GatewayError("user text must be non-empty");

    const std::string canonical = canonical_request(config, exchange);
    const std::string key = text::fnv1a64_hex(canonical);
    const std::string digest = text::fnv1a64_hex(canonical, kRequestDigestSeed);

    if (config.cache_path) {
      if (auto hit = cache_lookup(key, digest)) {
        cache_hits.fetch_add(1);
        audit(op, exchange, *hit, 0, true);
        return *hit;
      }
    }

    int attempt = 0;
    while (true) {
      try {
        // Pacing protects the remote service; the mock backend is local
        // and scripted, so only real transports are rate limited.
        if (config.kind == BackendKind::kHttpChatService) pacing.acquire();
        std::string response;
        {
          SemaphoreGuard guard(concurrency);
          transport_requests.fetch_add(1);
          response = transport->complete(exchange);
        }
        cache_store(key, digest, response);
        audit(op, exchange, response, attempt + 1, false);
        return response;
      } catch (const TransientBackendError& e) {
        if (attempt >= config.max_retries) {
          throw BackendExhaustedError("retries exhausted after " +
                                      std::to_string(attempt + 1) + " attempts; last error: " +
                                      e.what());
        }
        transport_retries.fetch_add(1);
        std::this_thread::sleep_for(backoff_delay(attempt));
        ++attempt;
      }
      // AuthError and other GatewayErrors propagate immediately.
    }
  }

  // Runs `ask` against the backend, re-asking with a corrective suffix
  // until `parse` accepts the response or retries run out.
  template <typename Parse>
  auto ask_until_parsed(const ChatExchange& base, const char* op, Parse parse)
      -> decltype(parse(std::string{})) {
    for (int attempt = 1; attempt <= config.max_retries + 1; ++attempt) {
      ChatExchange exchange = base;
      if (attempt > 1) {
        parse_retries.fetch_add(1);
        exchange.user_text += render_prompt(prompt_set.corrective_suffix,
                                            {{"attempt", std::to_string(attempt)}});
      }
      const std::string raw = complete(exchange, op);
      if (auto parsed = parse(raw)) return parsed;
    }
    return std::nullopt;
  }
};

LlmGateway::LlmGateway(BackendConfig config, PromptSet prompts)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(prompts))) {}

LlmGateway::~LlmGateway() = default;

std::string LlmGateway::complete(const ChatExchange& exchange) {
  return impl_->complete(exchange, "complete");
}

FillResult LlmGateway::generate_fills(const MaskTemplate& tmpl) {
  impl_->generation_calls.fetch_add(1);
  ChatExchange exchange;
  exchange.system_text = impl_->prompt_set.generation_system;
  exchange.user_text =
      render_prompt(impl_->prompt_set.generation_user, {{"mask", render_mask(tmpl)}});
  exchange.decode = DecodeParams{1.0, 256};  // diversity is the point of generation

  struct Parsed {
    std::vector<std::string> acceptable;
    std::vector<std::string> unacceptable;
  };
  auto parse = [](const std::string& raw) -> std::optional<Parsed> {
    auto doc = parse_structured(raw);
    if (!doc || !doc->is_object()) return std::nullopt;
    Parsed out;
    bool any_key = false;
    for (const auto& [name, target] :
         {std::pair{"acceptable", &out.acceptable}, std::pair{"unacceptable", &out.unacceptable}}) {
      if (!doc->contains(name)) continue;
      const json& arr = doc->at(name);
      if (!arr.is_array()) return std::nullopt;
      for (const json& item : arr) {
        if (!item.is_string()) return std::nullopt;
        target->push_back(item.get<std::string>());
      }
      any_key = true;
    }
    if (!any_key) return std::nullopt;
    return out;
  };

  FillResult result;
  std::optional<Parsed> parsed;
  try {
    parsed = impl_->ask_until_parsed(exchange, "generate_fills", parse);
  } catch (const AuthError&) {
    throw;  // systemic; every later call would fail the same way
  } catch (const GatewayError& e) {
    result.failed = true;
    result.failure_reason = e.what();
    return result;
  }
  if (!parsed) {
    result.failed = true;
    result.failure_reason = "no parsable fill arrays after retries";
    return result;
  }

  auto sanitize = [&result](std::vector<std::string>&& raw_fills, MoralLabel intended,
                            std::vector<std::string>& out) {
    for (std::string& raw : raw_fills) {
      std::string fill = trim_ws(raw);
      std::string reason;
      if (fill.empty()) {
        reason = "empty fill";
      } else if (fill.find(kMaskPlaceholder) != std::string::npos) {
        reason = "fill contains the placeholder";
      } else if (fill.find('\n') != std::string::npos || fill.find('\r') != std::string::npos) {
        reason = "fill contains a newline";
      } else if (out.size() >= 3) {
        reason = "more fills than requested";
      }
      if (reason.empty()) {
        out.push_back(std::move(fill));
      } else {
        result.dropped.push_back({std::move(fill), intended, std::move(reason)});
      }
    }
  };
  sanitize(std::move(parsed->acceptable), MoralLabel::kAcceptable, result.acceptable_fills);
  sanitize(std::move(parsed->unacceptable), MoralLabel::kUnacceptable, result.unacceptable_fills);

  if (result.acceptable_fills.empty() && result.unacceptable_fills.empty()) {
    result.failed = true;
    result.failure_reason = "all fills dropped by sanitization";
  }
  return result;
}

RelabelResult LlmGateway::relabel(const std::string& sentence) {
  if (sentence.empty()) throw GatewayError("cannot relabel an empty sentence");
  impl_->relabel_calls.fetch_add(1);
  ChatExchange exchange;
  exchange.system_text = impl_->prompt_set.relabel_system;
  exchange.user_text = render_prompt(impl_->prompt_set.relabel_user, {{"sentence", sentence}});
  exchange.decode = DecodeParams{0.0, 8};  // judgments should be stable

  auto parse = [](const std::string& raw) -> std::optional<int> { return parse_digit(raw, 2); };
  std::optional<int> verdict;
  try {
    verdict = impl_->ask_until_parsed(exchange, "relabel", parse);
  } catch (const AuthError&) {
    throw;
  } catch (const GatewayError&) {
    verdict = std::nullopt;  // backend failure degrades to the unparsable path
  }
  if (!verdict) {
    // Ambiguous output is treated as ambiguous morality.
    return {MoralLabel::kIndistinguishable, true};
  }
  return {static_cast<MoralLabel>(*verdict), false};
}

MoralLabel LlmGateway::one_shot_classify(const std::string& sentence,
                                         const std::string& exemplar_text,
                                         MoralLabel exemplar_label) {
  if (!is_binary(exemplar_label)) throw GatewayError("exemplar label must be binary");
  impl_->classify_calls.fetch_add(1);
  ChatExchange exchange;
  exchange.system_text = impl_->prompt_set.classify_system;
  exchange.user_text = render_prompt(
      impl_->prompt_set.classify_user,
      {{"sentence", sentence},
       {"exemplar_text", exemplar_text},
       {"exemplar_label", std::to_string(label_value(exemplar_label))}});
  exchange.decode = DecodeParams{0.0, 8};

  auto parse = [](const std::string& raw) -> std::optional<int> { return parse_digit(raw, 1); };
  auto label = impl_->ask_until_parsed(exchange, "one_shot_classify", parse);
  if (!label) {
    throw BackendExhaustedError("no parsable class label after retries for: " + sentence);
  }
  return static_cast<MoralLabel>(*label);
}

std::optional<std::vector<std::string>> LlmGateway::generate_paraphrases(
    const std::string& sentence) {
  impl_->paraphrase_calls.fetch_add(1);
  ChatExchange exchange;
  exchange.system_text = impl_->prompt_set.paraphrase_system;
  exchange.user_text = render_prompt(impl_->prompt_set.paraphrase_user, {{"sentence", sentence}});
  exchange.decode = DecodeParams{1.0, 512};

  auto parse = [](const std::string& raw) -> std::optional<std::vector<std::string>> {
    auto doc = parse_structured(raw);
    if (!doc || !doc->is_array()) return std::nullopt;
    std::vector<std::string> out;
    for (const json& item : *doc) {
      if (!item.is_string()) return std::nullopt;
      std::string p = trim_ws(item.get<std::string>());
      if (p.empty() || p.find('\n') != std::string::npos) continue;
      if (out.size() < 3) out.push_back(std::move(p));
    }
    return out;
  };
  try {
    return impl_->ask_until_parsed(exchange, "generate_paraphrases", parse);
  } catch (const AuthError&) {
    throw;
  } catch (const GatewayError&) {
    return std::nullopt;
  }
}

GatewayCounters LlmGateway::counters() const {
  GatewayCounters c;
  c.generation_calls = impl_->generation_calls.load();
  c.relabel_calls = impl_->relabel_calls.load();
  c.classify_calls = impl_->classify_calls.load();
  c.paraphrase_calls = impl_->paraphrase_calls.load();
  c.transport_requests = impl_->transport_requests.load();
  c.cache_hits = impl_->cache_hits.load();
  c.transport_retries = impl_->transport_retries.load();
  c.parse_retries = impl_->parse_retries.load();
  return c;
}

const PromptSet& LlmGateway::prompts() const { return impl_->prompt_set; }
const BackendConfig& LlmGateway::config() const { return impl_->config; }

}  // namespace mtle
