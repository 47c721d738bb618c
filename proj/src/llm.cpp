#include "simulacra/llm.hpp"

#include "simulacra/error.hpp"
#include "simulacra/util.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <thread>

namespace simulacra {

using nlohmann::json;

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view s) {
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    throw ParseError("unknown chat role '" + std::string(s) + "'");
}

void ChatRequest::validate() const {
    if (messages.empty()) throw InvalidArgument("chat request has no messages");
    if (messages.front().role == Role::Assistant)
        throw InvalidArgument("first chat message must be system or user");
    for (const auto& m : messages) {
        if (m.content.empty()) throw InvalidArgument("chat message content is empty");
    }
    if (temperature < 0.0) throw InvalidArgument("temperature must be >= 0");
    if (max_tokens <= 0) throw InvalidArgument("max_tokens must be > 0");
}

std::string render_for_matching(const ChatRequest& req) {
    std::string out;
    for (std::size_t i = 0; i < req.messages.size(); ++i) {
        if (i) out += "\n\n";
        out += req.messages[i].content;
    }
    return out;
}

// ---- Backend -------------------------------------------------------------------

std::string Backend::chat(const ChatRequest& req) {
    req.validate();
    std::string text = do_chat(req);
    if (recording_) {
        std::lock_guard lock(log_mutex_);
        log_.push_back({req, text});
    }
    return text;
}

std::vector<Exchange> Backend::transcript() const {
    std::lock_guard lock(log_mutex_);
    return log_;
}

void Backend::clear_transcript() {
    std::lock_guard lock(log_mutex_);
    log_.clear();
}

// ---- Mock ------------------------------------------------------------------------

struct MockBackend::CompiledRule {
    std::optional<std::regex> regex;
};

MockScript MockScript::from_json(const json& j) {
    if (!j.is_object()) throw ParseError("mock script must be an object");
    MockScript script;
    script.fallback = j.value("fallback", std::string{});
    for (const auto& r : j.value("rules", json::array())) {
        MockRule rule;
        if (r.contains("contains")) {
            const auto& c = r.at("contains");
            if (c.is_string()) {
                rule.contains.push_back(c.get<std::string>());
            } else if (c.is_array()) {
                rule.contains = c.get<std::vector<std::string>>();
            } else {
                throw ParseError("mock rule 'contains' must be a string or array of strings");
            }
        }
        if (r.contains("regex")) rule.regex = r.at("regex").get<std::string>();
        if (rule.contains.empty() && !rule.regex) throw ParseError("mock rule needs 'contains' or 'regex'");
        if (!r.contains("response") || !r.at("response").is_string())
            throw ParseError("mock rule needs a string 'response'");
        rule.response = r.at("response").get<std::string>();
        if (r.contains("max_uses") && !r.at("max_uses").is_null()) rule.max_uses = r.at("max_uses").get<int>();
        script.rules.push_back(std::move(rule));
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

json MockScript::to_json() const {
    json rules = json::array();
    for (const auto& r : this->rules) {
        json jr;
        if (!r.contains.empty()) jr["contains"] = r.contains;
        if (r.regex) jr["regex"] = *r.regex;
        jr["response"] = r.response;
        if (r.max_uses) jr["max_uses"] = *r.max_uses;
        rules.push_back(std::move(jr));
    }
    return {{"rules", rules}, {"fallback", fallback}};
}

MockBackend::MockBackend(MockScript script, bool record, std::string model)
    : Backend(record), script_(std::move(script)), model_(std::move(model)), uses_(script_.rules.size(), 0) {
    for (const auto& r : script_.rules) {
        auto c = std::make_shared<CompiledRule>();
        if (r.regex) {
            try {
                c->regex.emplace(*r.regex);
            } catch (const std::regex_error& e) {
                throw ParseError("bad mock regex '" + *r.regex + "': " + e.what());
            }
        }
        compiled_.push_back(std::move(c));
    }
}

std::vector<int> MockBackend::rule_uses() const {
    std::lock_guard lock(mutex_);
    return uses_;
}

std::string MockBackend::do_chat(const ChatRequest& req) {
    const std::string prompt = render_for_matching(req);
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < script_.rules.size(); ++i) {
        const auto& rule = script_.rules[i];
        if (rule.max_uses && uses_[i] >= *rule.max_uses) continue;
        const bool all = std::all_of(rule.contains.begin(), rule.contains.end(),
                                     [&](const std::string& s) { return prompt.find(s) != std::string::npos; });
        if (!all) continue;
        if (compiled_[i]->regex && !std::regex_search(prompt, *compiled_[i]->regex)) continue;
        ++uses_[i];
        return rule.response;
    }
    return script_.fallback;
}

// ---- Live ------------------------------------------------------------------------

LiveConfig LiveConfig::from_env(std::string model_id, std::string base_url) {
    LiveConfig cfg;
    cfg.model_id = std::move(model_id);
    cfg.base_url = std::move(base_url);
    if (cfg.base_url.empty()) {
        if (const char* env = std::getenv("SIMULACRA_BASE_URL")) cfg.base_url = env;
    }
    if (const char* key = std::getenv("SIMULACRA_API_KEY")) cfg.api_key = key;
    return cfg;
}

std::pair<std::string, std::string> split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("base url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

LiveBackend::LiveBackend(LiveConfig cfg, bool record)
    : Backend(record), cfg_(std::move(cfg)), in_flight_(std::max(1, cfg_.max_in_flight)) {
    if (cfg_.base_url.empty()) throw InvalidArgument("live backend needs a base url");
    if (cfg_.model_id.empty()) throw InvalidArgument("live backend needs a model id");
    if (cfg_.max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
    if (cfg_.max_in_flight > 1024) throw InvalidArgument("max_in_flight must be <= 1024");
    std::tie(scheme_host_port_, path_prefix_) = split_base_url(cfg_.base_url);
}

json LiveBackend::request_body(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return {{"model", req.model_id}, {"messages", messages}, {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
}

std::string LiveBackend::parse_response_body(const std::string& body) {
    try {
        const auto j = json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw BadResponse("message content is not a string");
        return content.get<std::string>();
    } catch (const json::exception& e) {
        throw BadResponse(e.what());
    }
}

namespace {

class SemaphoreGuard {
public:
    explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
    ~SemaphoreGuard() { s_.release(); }
    SemaphoreGuard(const SemaphoreGuard&) = delete;
    SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

private:
    std::counting_semaphore<1024>& s_;
};

bool is_transient(int status) { return status == 429 || (status >= 500 && status <= 599); }

}  // namespace

std::string LiveBackend::do_chat(const ChatRequest& req) {
    ChatRequest wire = req;
    if (wire.model_id.empty()) wire.model_id = cfg_.model_id;
    const std::string body = request_body(wire).dump();
    const std::string path = path_prefix_ + "/chat/completions";

    SemaphoreGuard slot(in_flight_);
    auto backoff = cfg_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
        httplib::Client client(scheme_host_port_);
        client.set_connection_timeout(cfg_.timeout);
        client.set_read_timeout(cfg_.timeout);
        client.set_write_timeout(cfg_.timeout);
        httplib::Headers headers;
        if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

        auto res = client.Post(path, headers, body, "application/json");
        if (res) {
            if (res->status == 200) return parse_response_body(res->body);
            if (res->status == 401 || res->status == 403) throw AuthError(res->status);
            if (!is_transient(res->status))
                throw BadResponse("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            last_error = httplib::to_string(res.error());
        }
        if (attempt < cfg_.max_attempts) {
            std::this_thread::sleep_for(backoff);
            backoff = std::min(cfg_.max_backoff, std::chrono::duration_cast<std::chrono::milliseconds>(
                                                     backoff * cfg_.backoff_multiplier));
        }
    }
    throw TransportError(last_error, cfg_.max_attempts);
}

}  // namespace simulacra
