#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtle/gateway.hpp"

namespace mtle {

namespace {

using nlohmann::json;

// Scripted offline backend. The fixture file maps prompt-matching rules
// to response sequences:
//
//   {
//     "delay_ms": 0,
//     "default_response": "…",
//     "rules": [
//       {"match": "substring", "pattern": "…", "responses": ["…", "…"],
//        "repeat_last": true}
//     ]
//   }
//
// Rules are tried in file order against the user text; each rule keeps a
// per-call cursor into its response sequence.
class MockTransport : public ChatTransport {
 public:
  explicit MockTransport(const BackendConfig& config) {
    if (!config.fixtures_path) {
      throw std::invalid_argument("mock backend requires a fixtures file");
    }
    std::ifstream in(*config.fixtures_path, std::ios::binary);
    if (!in) {
      throw std::invalid_argument("cannot open mock fixtures file: " + *config.fixtures_path);
    }
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw std::invalid_argument("mock fixtures file " + *config.fixtures_path +
                                  " is not valid JSON: " + e.what());
    }
    delay_ = std::chrono::milliseconds(doc.value("delay_ms", 0));
    if (doc.contains("default_response")) {
      default_response_ = doc.at("default_response").get<std::string>();
    }
    for (const json& r : doc.value("rules", json::array())) {
      Rule rule;
      rule.exact = r.value("match", "substring") == "exact";
      rule.pattern = r.at("pattern").get<std::string>();
      for (const json& resp : r.at("responses")) {
        rule.responses.push_back(resp.get<std::string>());
      }
      rule.repeat_last = r.value("repeat_last", true);
      if (rule.responses.empty()) {
        throw std::invalid_argument("mock rule for pattern '" + rule.pattern +
                                    "' has no responses");
      }
      rules_.push_back(std::move(rule));
    }
  }

  std::string complete(const ChatExchange& exchange) override {
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    std::lock_guard<std::mutex> lock(mutex_);
    for (Rule& rule : rules_) {
      const bool hit = rule.exact ? exchange.user_text == rule.pattern
                                  : exchange.user_text.find(rule.pattern) != std::string::npos;
      if (!hit) continue;
      std::size_t index = rule.cursor;
      if (index >= rule.responses.size()) {
        if (!rule.repeat_last) {
          throw GatewayError("mock rule for pattern '" + rule.pattern +
                             "' exhausted its responses");
        }
        index = rule.responses.size() - 1;
      } else {
        ++rule.cursor;
      }
      return rule.responses[index];
    }
    if (default_response_) return *default_response_;
    throw GatewayError("mock backend has no rule matching prompt: " + exchange.user_text);
  }

 private:
  struct Rule {
    bool exact = false;
    std::string pattern;
    std::vector<std::string> responses;
    bool repeat_last = true;
    std::size_t cursor = 0;
  };

  std::mutex mutex_;
  std::vector<Rule> rules_;
  std::optional<std::string> default_response_;
  std::chrono::milliseconds delay_{0};
};

}  // namespace

std::unique_ptr<ChatTransport> make_mock_transport(const BackendConfig& config) {
  return std::make_unique<MockTransport>(config);
}

}  // namespace mtle
