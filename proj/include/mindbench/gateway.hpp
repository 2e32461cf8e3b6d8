#pragma once

// Uniform chat-completion interface. Two backend kinds share one call path:
// "remote" POSTs a chat-completions JSON body over HTTP, "scripted" replays a
// deterministic rule list. The pipelines above never branch on the kind.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#if defined(MINDBENCH_WITH_TLS) && !defined(CPPHTTPLIB_OPENSSL_SUPPORT)
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include "mindbench/core.hpp"

namespace mindbench {

enum class MessageRole { System, User, Assistant };

inline std::string_view to_string(MessageRole r) {
  switch (r) {
    case MessageRole::System: return "system";
    case MessageRole::User: return "user";
    case MessageRole::Assistant: return "assistant";
  }
  throw ValidationError("invalid message role");
}

inline MessageRole role_from_string(std::string_view s) {
  if (s == "system") return MessageRole::System;
  if (s == "user") return MessageRole::User;
  if (s == "assistant") return MessageRole::Assistant;
  throw ValidationError("unknown message role: " + std::string(s));
}

struct ChatMessage {
  MessageRole role = MessageRole::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 512;
  std::optional<long> seed;

  bool operator==(const ChatRequest&) const = default;
};

inline const ChatRequest& validate_request(const ChatRequest& r) {
  if (r.messages.empty()) throw ValidationError("request has no messages");
  for (const auto& m : r.messages)
    if (m.content.empty()) throw ValidationError("message content empty");
  if (r.temperature < 0) throw ValidationError("temperature < 0");
  if (r.top_p <= 0 || r.top_p > 1) throw ValidationError("top_p outside (0,1]");
  if (r.max_tokens < 1) throw ValidationError("max_tokens < 1");
  return r;
}

struct ChatResponse {
  std::string content;
  std::string backend_id;
  int attempt_count = 1;
  bool seed_forwarded = false;
};

// ---------------------------------------------------------------------------
// Backend descriptors

struct ScriptRule {
  std::optional<std::string> match;  // regex over the last user message
  std::string response;

  bool operator==(const ScriptRule&) const = default;
};

// Rules are consumed one per call, in order. A call first looks at the next
// unconsumed rule: if it has no pattern, or its pattern matches the last user
// message, that rule answers and is consumed. Otherwise the call falls back
// to the default response (never consumed); with no default it fails.
struct ScriptedBehavior {
  std::vector<ScriptRule> rules;
  std::optional<std::string> default_response;

  bool operator==(const ScriptedBehavior&) const = default;
};

enum class BackendKind { Remote, Scripted };

struct BackendDescriptor {
  BackendKind kind = BackendKind::Scripted;
  std::string id;  // provenance label; defaults to the endpoint or "scripted"

  // remote only
  std::string endpoint;        // full URL, e.g. https://host/v1/chat/completions
  std::string credential_ref;  // name of the env var holding the bearer token
  int max_attempts = 3;
  int initial_backoff_ms = 1000;
  int max_inflight = 4;
  bool forward_seed = false;

  // scripted only
  ScriptedBehavior script;

  static BackendDescriptor remote(std::string endpoint, std::string credential_ref) {
    BackendDescriptor d;
    d.kind = BackendKind::Remote;
    d.endpoint = std::move(endpoint);
    d.credential_ref = std::move(credential_ref);
    return d;
  }

  static BackendDescriptor scripted(ScriptedBehavior s, std::string id = "scripted") {
    BackendDescriptor d;
    d.kind = BackendKind::Scripted;
    d.script = std::move(s);
    d.id = std::move(id);
    return d;
  }

  std::string effective_id() const {
    if (!id.empty()) return id;
    return kind == BackendKind::Remote ? endpoint : std::string("scripted");
  }
};

inline const BackendDescriptor& validate_descriptor(const BackendDescriptor& d) {
  if (d.kind == BackendKind::Remote) {
    if (d.endpoint.empty()) throw ValidationError("remote backend missing endpoint");
    if (!d.script.rules.empty() || d.script.default_response)
      throw ValidationError("remote backend carries a script");
    if (d.max_attempts < 1) throw ValidationError("max_attempts < 1");
    if (d.max_inflight < 1) throw ValidationError("max_inflight < 1");
  } else {
    if (!d.endpoint.empty() || !d.credential_ref.empty())
      throw ValidationError("scripted backend carries remote fields");
  }
  return d;
}

inline void to_json(json& j, const ScriptRule& r) {
  j = json::object();
  if (r.match) j["match"] = *r.match;
  j["response"] = r.response;
}
inline void from_json(const json& j, ScriptRule& r) {
  if (j.contains("match")) r.match = j.at("match").get<std::string>();
  j.at("response").get_to(r.response);
}

inline void to_json(json& j, const ScriptedBehavior& s) {
  j = json{{"rules", s.rules}};
  if (s.default_response) j["default"] = *s.default_response;
}
inline void from_json(const json& j, ScriptedBehavior& s) {
  s.rules = j.value("rules", std::vector<ScriptRule>{});
  if (j.contains("default")) s.default_response = j.at("default").get<std::string>();
}

inline void to_json(json& j, const BackendDescriptor& d) {
  j = json::object();
  if (d.kind == BackendKind::Remote) {
    j["kind"] = "remote";
    j["endpoint"] = d.endpoint;
    j["credential_ref"] = d.credential_ref;
    j["max_attempts"] = d.max_attempts;
    j["initial_backoff_ms"] = d.initial_backoff_ms;
    j["max_inflight"] = d.max_inflight;
    j["forward_seed"] = d.forward_seed;
  } else {
    j["kind"] = "scripted";
    j["script"] = d.script;
  }
  if (!d.id.empty()) j["id"] = d.id;
}
inline void from_json(const json& j, BackendDescriptor& d) {
  auto kind = j.at("kind").get<std::string>();
  if (kind == "remote") {
    d.kind = BackendKind::Remote;
    j.at("endpoint").get_to(d.endpoint);
    d.credential_ref = j.value("credential_ref", std::string{});
    d.max_attempts = j.value("max_attempts", d.max_attempts);
    d.initial_backoff_ms = j.value("initial_backoff_ms", d.initial_backoff_ms);
    d.max_inflight = j.value("max_inflight", d.max_inflight);
    d.forward_seed = j.value("forward_seed", d.forward_seed);
  } else if (kind == "scripted") {
    d.kind = BackendKind::Scripted;
    if (j.contains("script")) j.at("script").get_to(d.script);
  } else {
    throw ValidationError("unknown backend kind: " + kind);
  }
  d.id = j.value("id", std::string{});
  validate_descriptor(d);
}

// ---------------------------------------------------------------------------
// Backend handle

namespace detail {

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // begins with '/'
  bool https = false;
};

inline ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint missing scheme: " + url);
  ParsedUrl out;
  out.https = url.substr(0, scheme_end) == "https";
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    out.base = url;
    out.path = "/";
  } else {
    out.base = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  return out;
}

inline std::string build_request_body(const ChatRequest& req, bool with_seed) {
  json messages = json::array();
  for (const auto& m : req.messages)
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  json body{{"messages", messages},
            {"temperature", req.temperature},
            {"top_p", req.top_p},
            {"max_tokens", req.max_tokens}};
  if (with_seed && req.seed) body["seed"] = *req.seed;
  return body.dump();
}

// Content of the first assistant message found in a chat-completions style
// response; falls back to a bare "content" field.
inline std::string extract_content(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("response is not JSON");
  if (j.contains("choices") && j["choices"].is_array()) {
    for (const auto& choice : j["choices"]) {
      if (!choice.contains("message")) continue;
      const auto& msg = choice["message"];
      if (msg.value("role", "assistant") == "assistant" && msg.contains("content"))
        return msg["content"].get<std::string>();
    }
    throw TransportError("no assistant message in response");
  }
  if (j.contains("messages") && j["messages"].is_array()) {
    for (const auto& msg : j["messages"])
      if (msg.value("role", "") == "assistant" && msg.contains("content"))
        return msg["content"].get<std::string>();
    throw TransportError("no assistant message in response");
  }
  if (j.contains("content") && j["content"].is_string()) return j["content"].get<std::string>();
  throw TransportError("cannot locate assistant content in response");
}

inline bool retryable_transport_error(httplib::Error e) {
  return e == httplib::Error::ConnectionTimeout || e == httplib::Error::Read ||
         e == httplib::Error::Write || e == httplib::Error::Connection;
}

}  // namespace detail

// Shareable backend handle. complete() is thread-safe: the remote side gates
// concurrency with an in-flight semaphore, the scripted side serializes calls
// to preserve rule ordering.
class Backend {
 public:
  explicit Backend(BackendDescriptor descriptor)
      : descriptor_(std::move(validate_descriptor_copy(descriptor))),
        id_(descriptor_.effective_id()),
        inflight_(descriptor_.kind == BackendKind::Remote ? descriptor_.max_inflight : 1) {}

  const BackendDescriptor& descriptor() const { return descriptor_; }
  const std::string& id() const { return id_; }

  ChatResponse complete(const ChatRequest& request) {
    validate_request(request);
    if (descriptor_.kind == BackendKind::Scripted) return complete_scripted(request);
    return complete_remote(request);
  }

  // Requests seen so far, in order. Scripted backends only; useful for
  // payload inspection in tests.
  std::vector<ChatRequest> recorded_requests() const {
    std::lock_guard lock(mutex_);
    return recorded_;
  }

 private:
  static BackendDescriptor validate_descriptor_copy(BackendDescriptor d) {
    validate_descriptor(d);
    return d;
  }

  ChatResponse complete_scripted(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    recorded_.push_back(request);
    std::string last_user;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
      if (it->role == MessageRole::User) {
        last_user = it->content;
        break;
      }
    }
    if (last_user.empty() && !request.messages.empty()) last_user = request.messages.back().content;

    const auto& script = descriptor_.script;
    if (cursor_ < script.rules.size()) {
      const auto& rule = script.rules[cursor_];
      bool matches = !rule.match || std::regex_search(last_user, std::regex(*rule.match));
      if (matches) {
        ++cursor_;
        return {rule.response, id_, 1, false};
      }
    }
    if (script.default_response) return {*script.default_response, id_, 1, false};
    throw ScriptExhausted("scripted backend '" + id_ + "' has no rule for call " +
                          std::to_string(recorded_.size()) + " and no default");
  }

  ChatResponse complete_remote(const ChatRequest& request) {
    std::string token;
    if (!descriptor_.credential_ref.empty()) {
      const char* value = std::getenv(descriptor_.credential_ref.c_str());
      if (value == nullptr || *value == '\0')
        throw AuthError("credential environment variable not set: " + descriptor_.credential_ref);
      token = value;
    }

    auto url = detail::parse_url(descriptor_.endpoint);
    bool with_seed = descriptor_.forward_seed && request.seed.has_value();
    std::string body = detail::build_request_body(request, with_seed);
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

    for (int attempt = 1;; ++attempt) {
      auto result = post_once(url, headers, body);
      if (result.ok) {
        ChatResponse response;
        response.content = detail::extract_content(result.body);
        response.backend_id = id_;
        response.attempt_count = attempt;
        response.seed_forwarded = with_seed;
        return response;
      }
      bool last = attempt >= descriptor_.max_attempts;
      if (result.rate_limited) {
        if (last)
          throw RateLimitExhausted("rate limited by " + descriptor_.endpoint + " after " +
                                   std::to_string(attempt) + " attempts");
      } else if (result.retryable) {
        if (last)
          throw TransportError("transport failure talking to " + descriptor_.endpoint + ": " +
                               result.detail + " (after " + std::to_string(attempt) +
                               " attempts)");
      } else if (result.auth_denied) {
        throw AuthError("credential rejected by " + descriptor_.endpoint + " (HTTP " +
                        result.detail + ")");
      } else {
        throw TransportError("backend " + descriptor_.endpoint + " failed: " + result.detail);
      }
      auto delay = std::chrono::milliseconds(
          static_cast<long long>(descriptor_.initial_backoff_ms) << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }
  }

  struct PostResult {
    bool ok = false;
    bool rate_limited = false;
    bool retryable = false;
    bool auth_denied = false;
    std::string body;
    std::string detail;
  };

  PostResult post_once(const detail::ParsedUrl& url, const httplib::Headers& headers,
                       const std::string& body) {
    inflight_.acquire();
    struct Release {
      std::counting_semaphore<256>& s;
      ~Release() { s.release(); }
    } release{inflight_};

    PostResult out;
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (url.https) {
      out.detail = "https endpoint but TLS support not built in";
      return out;
    }
#endif
    httplib::Client client(url.base);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    auto result = client.Post(url.path, headers, body, "application/json");
    if (!result) {
      out.retryable = detail::retryable_transport_error(result.error());
      out.detail = httplib::to_string(result.error());
      return out;
    }
    int status = result->status;
    if (status == 429 || status == 408) {
      out.rate_limited = status == 429;
      out.retryable = status == 408;
      out.detail = "HTTP " + std::to_string(status);
      return out;
    }
    if (status == 401 || status == 403) {
      out.auth_denied = true;
      out.detail = std::to_string(status);
      return out;
    }
    if (status < 200 || status >= 300) {
      out.detail = "HTTP " + std::to_string(status);
      return out;
    }
    out.ok = true;
    out.body = result->body;
    return out;
  }

  BackendDescriptor descriptor_;
  std::string id_;
  mutable std::mutex mutex_;
  std::size_t cursor_ = 0;
  std::vector<ChatRequest> recorded_;
  std::counting_semaphore<256> inflight_;
};

using BackendPtr = std::shared_ptr<Backend>;

inline BackendPtr make_backend(BackendDescriptor d) {
  return std::make_shared<Backend>(std::move(d));
}

inline ChatResponse complete(Backend& backend, const ChatRequest& request) {
  return backend.complete(request);
}

// Provenance for a turn: the sampling parameters actually sent and the
// attempt count actually used.
inline Provenance record_provenance(const ChatResponse& response, const ChatRequest& request) {
  Provenance p;
  p.backend_id = response.backend_id;
  p.temperature = request.temperature;
  p.top_p = request.top_p;
  p.attempt_count = response.attempt_count;
  if (response.seed_forwarded && request.seed) p.seed = *request.seed;
  return p;
}

}  // namespace mindbench
