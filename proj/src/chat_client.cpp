#include "polymodal/chat_client.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include "polymodal/common.hpp"

namespace polymodal {
namespace {

using json = nlohmann::json;

class HttpTransport final : public ChatTransport {
 public:
  HttpResponse post(const std::string& url, const std::string& body,
                    const std::string& bearer_token,
                    std::chrono::milliseconds timeout) override {
    // Split "scheme://host[:port]" from the path.
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
      throw Error(ErrorCode::config_error, "endpoint is not an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers{{"Authorization", "Bearer " + bearer_token}};
    auto res = client.Post(path, headers, body, "application/json");
    if (!res)
      throw Error(ErrorCode::transport_error, "request to " + origin + " failed: " +
                                                  httplib::to_string(res.error()));
    return {res->status, res->body};
  }
};

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

std::string_view to_string(ChatMode mode) {
  switch (mode) {
    case ChatMode::live: return "live";
    case ChatMode::record: return "record";
    case ChatMode::replay: return "replay";
  }
  return "unknown";
}

std::optional<ChatMode> chat_mode_from_string(std::string_view s) {
  if (s == "live") return ChatMode::live;
  if (s == "record") return ChatMode::record;
  if (s == "replay") return ChatMode::replay;
  return std::nullopt;
}

void ChatClientConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::config_error, what); };
  if (mode == ChatMode::replay || mode == ChatMode::record) {
    if (fixture.empty()) fail(std::string(to_string(mode)) + " mode requires a fixture path");
  }
  if (mode == ChatMode::live || mode == ChatMode::record) {
    if (endpoint.empty()) fail("chat endpoint is empty");
    if (token_env.empty()) fail("no auth token environment variable configured");
    const char* token = std::getenv(token_env.c_str());
    if (token == nullptr || *token == '\0')
      fail("environment variable " + token_env + " is not set");
  }
  if (max_retries < 0) fail("max_retries must be >= 0");
  if (timeout.count() <= 0) fail("timeout must be positive");
  if (!(backoff_factor >= 1.0)) fail("backoff_factor must be >= 1");
  if (parallelism < 1) fail("parallelism must be >= 1");
}

std::unique_ptr<ReplayFixture> ReplayFixture::load(const std::filesystem::path& path) {
  auto fx = std::make_unique<ReplayFixture>();
  std::ifstream in(path);
  if (!in) return fx;
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object() || !j.contains("responses") ||
      !j["responses"].is_object())
    throw Error(ErrorCode::config_error, path.string() + " is not a replay fixture");
  for (const auto& [key, value] : j["responses"].items()) {
    if (!value.is_string())
      throw Error(ErrorCode::config_error, "fixture entry " + key + " is not a string");
    fx->responses_.emplace(key, value.get<std::string>());
  }
  return fx;
}

void ReplayFixture::save(const std::filesystem::path& path) const {
  json j;
  j["version"] = 1;
  {
    std::lock_guard lock(mutex_);
    j["responses"] = responses_;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
}

std::optional<std::string> ReplayFixture::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = responses_.find(key);
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

void ReplayFixture::put(const std::string& key, std::string body) {
  std::lock_guard lock(mutex_);
  responses_[key] = std::move(body);
}

std::size_t ReplayFixture::size() const {
  std::lock_guard lock(mutex_);
  return responses_.size();
}

std::string chat_request_body(const ChatClientConfig& config,
                              std::span<const ChatMessage> messages) {
  nlohmann::ordered_json j;
  j["model"] = config.model;
  j["temperature"] = config.temperature;
  j["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : messages)
    j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  return j.dump();
}

std::string request_key(std::string_view request_body) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(request_body)));
  return buf;
}

std::string completion_content(std::string_view response_body) {
  json j = json::parse(response_body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::transport_error, "response body is not JSON");
  auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty())
    throw Error(ErrorCode::transport_error, "response has no choices");
  const auto& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string())
    throw Error(ErrorCode::transport_error, "response has no message content");
  return first["message"]["content"].get<std::string>();
}

ChatClient::ChatClient(ChatClientConfig config, std::shared_ptr<ChatTransport> transport,
                       Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  config_.validate();
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (config_.mode == ChatMode::replay && !std::filesystem::is_regular_file(config_.fixture))
    throw Error(ErrorCode::config_error, "replay fixture " + config_.fixture.string() + " not found");
  if (config_.mode != ChatMode::live) fixture_ = ReplayFixture::load(config_.fixture);
  if (config_.mode != ChatMode::replay) {
    token_ = std::getenv(config_.token_env.c_str());
    if (!transport_) transport_ = make_http_transport();
  }
}

std::string ChatClient::fetch(const std::string& body) {
  std::chrono::milliseconds delay = config_.initial_backoff;
  std::string last_error;
  int attempts = 0;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      sleeper_(delay);
      delay = std::chrono::milliseconds(
          static_cast<std::int64_t>(static_cast<double>(delay.count()) * config_.backoff_factor));
    }
    ++attempts;
    try {
      auto res = transport_->post(config_.endpoint, body, token_, config_.timeout);
      if (res.status >= 200 && res.status < 300) return res.body;
      last_error = "HTTP " + std::to_string(res.status);
      if (!retryable(res.status)) break;
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::transport_error,
              "chat request failed after " + std::to_string(attempts) +
                  " attempt(s): " + last_error);
}

std::string ChatClient::complete(std::span<const ChatMessage> messages) {
  const std::string body = chat_request_body(config_, messages);
  const std::string key = request_key(body);

  if (config_.mode == ChatMode::replay) {
    auto hit = fixture_->find(key);
    if (!hit) throw Error(ErrorCode::fixture_miss, "no recorded response for request " + key);
    return completion_content(*hit);
  }

  std::string response = fetch(body);
  std::string content = completion_content(response);
  if (config_.mode == ChatMode::record) {
    fixture_->put(key, std::move(response));
    std::lock_guard lock(save_mutex_);
    fixture_->save(config_.fixture);
  }
  return content;
}

std::unique_ptr<ChatTransport> make_http_transport() { return std::make_unique<HttpTransport>(); }

}  // namespace polymodal
