#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace simulacra {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role) noexcept;
Role role_from_string(std::string_view s);

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::optional<std::uint64_t> seed_hint;

    /// Throws InvalidArgument on empty messages, empty content, a leading assistant
    /// turn, negative temperature or non-positive max_tokens.
    void validate() const;
    bool operator==(const ChatRequest&) const = default;
};

struct Exchange {
    ChatRequest request;
    std::string response;
};

/// Message contents joined with blank lines; what mock rules match against.
std::string render_for_matching(const ChatRequest& req);

/// Chat-completion backend. `chat` is safe to call concurrently; the transcript is
/// appended in completion order.
class Backend {
public:
    explicit Backend(bool record = true) : recording_(record) {}
    virtual ~Backend() = default;
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    std::string chat(const ChatRequest& req);

    std::vector<Exchange> transcript() const;
    void clear_transcript();
    bool recording() const noexcept { return recording_; }

    virtual std::string model_id() const = 0;

protected:
    virtual std::string do_chat(const ChatRequest& req) = 0;

private:
    bool recording_;
    mutable std::mutex log_mutex_;
    std::vector<Exchange> log_;
};

// ---- mock --------------------------------------------------------------------

/// A rule fires when every `contains` substring is present and `regex` (if set)
/// matches somewhere in the rendered prompt.
struct MockRule {
    std::vector<std::string> contains;
    std::optional<std::string> regex;
    std::string response;
    std::optional<int> max_uses;
};

struct MockScript {
    std::vector<MockRule> rules;
    std::string fallback;

    static MockScript from_json(const nlohmann::json& j);
    static MockScript load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

/// First-rule-wins scripted backend. Rule consumption is atomic per call.
class MockBackend final : public Backend {
public:
    explicit MockBackend(MockScript script, bool record = true, std::string model = "mock");
    std::string model_id() const override { return model_; }
    /// How often each rule fired, in rule order.
    std::vector<int> rule_uses() const;

protected:
    std::string do_chat(const ChatRequest& req) override;

private:
    struct CompiledRule;
    MockScript script_;
    std::string model_;
    std::vector<std::shared_ptr<const CompiledRule>> compiled_;
    mutable std::mutex mutex_;
    std::vector<int> uses_;
};

// ---- live ----------------------------------------------------------------------

struct LiveConfig {
    std::string base_url;
    std::string model_id;
    std::string api_key;
    int max_attempts = 4;
    std::chrono::milliseconds initial_backoff{500};
    double backoff_multiplier = 2.0;
    std::chrono::milliseconds max_backoff{8000};
    std::chrono::seconds timeout{120};
    int max_in_flight = 4;

    /// Reads SIMULACRA_API_KEY and, when `base_url` is empty, SIMULACRA_BASE_URL.
    static LiveConfig from_env(std::string model_id, std::string base_url = {});
};

/// POST {base_url}/chat/completions with bearer auth. Retries HTTP 429, 5xx and
/// transport failures with exponential backoff; 401/403 fail immediately.
class LiveBackend final : public Backend {
public:
    explicit LiveBackend(LiveConfig cfg, bool record = true);
    std::string model_id() const override { return cfg_.model_id; }
    const LiveConfig& config() const noexcept { return cfg_; }

    static nlohmann::json request_body(const ChatRequest& req);
    /// Extracts choices[0].message.content or throws BadResponse.
    static std::string parse_response_body(const std::string& body);

protected:
    std::string do_chat(const ChatRequest& req) override;

private:
    LiveConfig cfg_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::counting_semaphore<1024> in_flight_;
};

/// Forwards to another backend while keeping a private transcript. Used to scope a
/// transcript to one simulated student.
class RecordingBackend final : public Backend {
public:
    explicit RecordingBackend(Backend& inner) : Backend(true), inner_(inner) {}
    std::string model_id() const override { return inner_.model_id(); }

protected:
    std::string do_chat(const ChatRequest& req) override { return inner_.chat(req); }

private:
    Backend& inner_;
};

/// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_base_url(const std::string& url);

}  // namespace simulacra
