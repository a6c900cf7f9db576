#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mtle/gateway.hpp"

namespace mtle {

namespace {

using nlohmann::json;

struct SplitUrl {
  std::string base;  // scheme://authority
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint URL must include a scheme: " + url);
  }
  const std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

// Minimal chat-completions client: request {model, messages, temperature,
// max_tokens}, response {choices:[{message:{content}}]}.
class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(const BackendConfig& config)
      : config_(config), url_(split_url(config.endpoint_url)) {}

  std::string complete(const ChatExchange& exchange) override {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw AuthError("environment variable " + config_.api_key_env + " is empty or unset");
    }

    json body;
    body["model"] = config_.model_name;
    json messages = json::array();
    if (!exchange.system_text.empty()) {
      messages.push_back({{"role", "system"}, {"content", exchange.system_text}});
    }
    messages.push_back({{"role", "user"}, {"content", exchange.user_text}});
    body["messages"] = std::move(messages);
    body["temperature"] = exchange.decode.temperature;
    body["max_tokens"] = exchange.decode.max_output_tokens;

    httplib::Client client(url_.base);
    const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(
        config_.request_timeout);
    client.set_connection_timeout(timeout_s.count() > 0 ? timeout_s : std::chrono::seconds(1));
    client.set_read_timeout(timeout_s.count() > 0 ? timeout_s : std::chrono::seconds(1));
    client.set_write_timeout(timeout_s.count() > 0 ? timeout_s : std::chrono::seconds(1));
    httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};

    auto result = client.Post(url_.path, headers, body.dump(), "application/json");
    if (!result) {
      throw TransientBackendError("request to " + config_.endpoint_url +
                                  " failed: " + httplib::to_string(result.error()));
    }
    const int status = result->status;
    if (status == 401 || status == 403) {
      throw AuthError("authentication rejected (HTTP " + std::to_string(status) + ")");
    }
    if (status == 429 || status >= 500) {
      throw TransientBackendError("HTTP " + std::to_string(status) + " from " +
                                  config_.endpoint_url);
    }
    if (status != 200) {
      throw GatewayError("HTTP " + std::to_string(status) + " from " + config_.endpoint_url +
                         ": " + result->body);
    }

    try {
      json doc = json::parse(result->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw GatewayError("malformed chat completion response: " + std::string(e.what()));
    }
  }

 private:
  BackendConfig config_;
  SplitUrl url_;
};

}  // namespace

std::unique_ptr<ChatTransport> make_http_transport(const BackendConfig& config) {
  return std::make_unique<HttpChatTransport>(config);
}

}  // namespace mtle
