#pragma once

// Chat-completion client with record/replay fixtures. Replay mode never
// touches the network; record mode calls the live endpoint and stores every
// response body under the hash of its request body.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>

namespace polymodal {

enum class ChatMode { live, record, replay };

std::string_view to_string(ChatMode mode);
std::optional<ChatMode> chat_mode_from_string(std::string_view s);

struct ChatClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string token_env = "OPENAI_API_KEY";  // name of the variable, never its value
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double backoff_factor = 2.0;
  double temperature = 0.7;
  ChatMode mode = ChatMode::replay;
  std::filesystem::path fixture;
  std::size_t parallelism = 1;

  /// Throws config_error; live and record modes also require the token
  /// variable to be set.
  void validate() const;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Throws on connection-level failures.
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::string& bearer_token,
                            std::chrono::milliseconds timeout) = 0;
};

/// HTTPS/HTTP transport on cpp-httplib.
std::unique_ptr<ChatTransport> make_http_transport();

/// request-hash -> response body, persisted as JSON.
class ReplayFixture {
 public:
  /// An absent file yields an empty fixture.
  static std::unique_ptr<ReplayFixture> load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<std::string> find(const std::string& key) const;
  void put(const std::string& key, std::string body);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::string> responses_;
};

/// Serialized request sent to the endpoint; the token is not part of it.
std::string chat_request_body(const ChatClientConfig& config,
                              std::span<const ChatMessage> messages);

/// Fixture key: 16 lowercase hex digits of FNV-1a over the request body.
std::string request_key(std::string_view request_body);

/// Extracts choices[0].message.content; throws transport_error otherwise.
std::string completion_content(std::string_view response_body);

class ChatClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  /// Validates the configuration before anything else. `transport` defaults
  /// to the HTTP transport in live and record modes and is never created in
  /// replay mode.
  explicit ChatClient(ChatClientConfig config,
                      std::shared_ptr<ChatTransport> transport = nullptr,
                      Sleeper sleeper = {});

  /// Assistant message content. Throws transport_error after exhausting
  /// retries, fixture_miss in replay mode.
  std::string complete(std::span<const ChatMessage> messages);

  const ChatClientConfig& config() const noexcept { return config_; }

 private:
  std::string fetch(const std::string& body);

  ChatClientConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  Sleeper sleeper_;
  std::string token_;
  std::unique_ptr<ReplayFixture> fixture_;
  std::mutex save_mutex_;
};

}  // namespace polymodal
