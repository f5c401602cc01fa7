#pragma once

// OpenAI-compatible chat-completions client.
//
//   POST {base_url}/chat/completions
//   {"model": ..., "messages": [{"role": ..., "content": [parts]}],
//    "temperature": ..., "max_tokens": ...}
//
// Parts are {"type":"text","text":...} or
// {"type":"image_url","image_url":{"url":"data:<mime>;base64,..."}}.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <openssl/sha.h>

#include "vcal/dataset.hpp"
#include "vcal/prompting.hpp"
#include "vcal/types.hpp"

namespace vcal {

class ClientError : public Error {
 public:
  enum class Kind { auth, exhausted, empty_content, bad_response, http, config };

  ClientError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ModelEndpoint {
  std::string base_url;
  std::string model_name;
  /// Name of the environment variable holding the API key.
  std::string api_key_ref = "OPENAI_API_KEY";
  double temperature = 0.0;
  int max_tokens = 4096;
  std::chrono::milliseconds timeout{120000};

  void validate() const {
    if (base_url.find("://") == std::string::npos) {
      throw ClientError(ClientError::Kind::config, "base_url must be absolute: " + base_url);
    }
    if (model_name.empty()) throw ClientError(ClientError::Kind::config, "model name is empty");
    if (temperature < 0.0) throw ClientError(ClientError::Kind::config, "temperature must be >= 0");
    if (max_tokens < 1) throw ClientError(ClientError::Kind::config, "max_tokens must be positive");
    if (timeout.count() <= 0) throw ClientError(ClientError::Kind::config, "timeout must be positive");
  }
};

// ---------------------------------------------------------------- messages

struct ContentPart {
  enum class Type { text, image_url };
  Type type = Type::text;
  /// Text for text parts, the URL (usually a data URI) for image parts.
  std::string value;

  static ContentPart text(std::string s) { return {Type::text, std::move(s)}; }
  static ContentPart image(std::string url) { return {Type::image_url, std::move(url)}; }
  bool operator==(const ContentPart&) const = default;
};

struct Message {
  std::string role;
  std::vector<ContentPart> content;

  /// Concatenated text parts.
  std::string text() const {
    std::string out;
    for (const auto& p : content) {
      if (p.type == ContentPart::Type::text) out += p.value;
    }
    return out;
  }
  bool operator==(const Message&) const = default;
};

inline nlohmann::json to_json(const ContentPart& p) {
  if (p.type == ContentPart::Type::text) return {{"type", "text"}, {"text", p.value}};
  return {{"type", "image_url"}, {"image_url", {{"url", p.value}}}};
}

inline nlohmann::json to_json(const Message& m) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : m.content) parts.push_back(to_json(p));
  return {{"role", m.role}, {"content", parts}};
}

inline nlohmann::json to_json(const std::vector<Message>& ms) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : ms) arr.push_back(to_json(m));
  return arr;
}

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out += hex[b >> 4];
    out += hex[b & 0xF];
  }
  return out;
}

inline std::string read_binary(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string media_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

inline std::string data_uri(const std::filesystem::path& file, std::string media_type = {}) {
  if (media_type.empty()) media_type = media_type_for(file);
  return "data:" + media_type + ";base64," + base64_encode(read_binary(file));
}

/// Image parts for an item's visual attachments: each image file, then k
/// sampled frames per frame directory. Inline text travels in the prompt.
inline std::vector<ContentPart> attachment_parts(const EvalItem& item, std::size_t frames) {
  std::vector<ContentPart> parts;
  for (const auto& a : item.attachments) {
    switch (a.kind) {
      case AttachmentKind::image_file:
        parts.push_back(ContentPart::image(data_uri(a.path_or_text, a.media_type)));
        break;
      case AttachmentKind::frame_dir:
        for (const auto& f : sampled_frames(a, frames)) parts.push_back(ContentPart::image(data_uri(f)));
        break;
      case AttachmentKind::inline_text:
        break;
    }
  }
  return parts;
}

inline Message user_message(std::string prompt, std::vector<ContentPart> images = {}) {
  Message m{"user", std::move(images)};
  m.content.push_back(ContentPart::text(std::move(prompt)));
  return m;
}

inline Message assistant_message(std::string text) { return {"assistant", {ContentPart::text(std::move(text))}}; }

// --------------------------------------------------------------- transport

struct HttpRequest {
  std::string base_url;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
  std::chrono::milliseconds timeout{120000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Raised by a transport when no HTTP response arrived (timeout, refused
/// connection). Treated as transient.
class TransportFailure : public Error {
 public:
  using Error::Error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_chat(const HttpRequest& req) = 0;
};

/// Splits "http://host:port/v1" into ("http://host:port", "/v1").
inline std::pair<std::string, std::string> split_base_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ClientError(ClientError::Kind::config, "base_url must be absolute: " + url);
  auto slash = url.find('/', scheme + 3);
  std::string host = slash == std::string::npos ? url : url.substr(0, slash);
  std::string path = slash == std::string::npos ? "" : url.substr(slash);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {host, path};
}

class HttpTransport : public Transport {
 public:
  HttpResponse post_chat(const HttpRequest& req) override {
    auto [host, prefix] = split_base_url(req.base_url);
    httplib::Client cli(host);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(req.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    for (const auto& [k, v] : req.headers) headers.emplace(k, v);
    auto res = cli.Post(prefix + "/chat/completions", headers, req.body, "application/json");
    if (!res) throw TransportFailure("request to " + req.base_url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }
};

// ------------------------------------------------------------------- retry

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::duration<double> base_delay{1.0};
  double factor = 2.0;
  double jitter = 0.2;
  std::function<void(std::chrono::duration<double>)> sleep = [](std::chrono::duration<double> d) {
    std::this_thread::sleep_for(d);
  };

  static bool retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

  /// Delay before retry number `retry` (1-based) given a jitter draw u in [-1, 1].
  std::chrono::duration<double> delay(int retry, double u) const {
    double d = base_delay.count();
    for (int i = 1; i < retry; ++i) d *= factor;
    return std::chrono::duration<double>(d * (1.0 + jitter * u));
  }
};

// ------------------------------------------------------------------- cache

struct TokenUsage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
};

struct CachedResponse {
  std::string text;
  TokenUsage usage;
};

/// Content-addressed response store: one JSON file per request digest.
/// Reads run concurrently; writes are serialized and land by rename.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  static std::string key(const ModelEndpoint& ep, const std::vector<Message>& messages) {
    nlohmann::json j{{"model", ep.model_name},
                     {"messages", to_json(messages)},
                     {"temperature", ep.temperature},
                     {"max_tokens", ep.max_tokens}};
    return sha256_hex(j.dump());
  }

  std::optional<CachedResponse> lookup(const std::string& key) const {
    std::shared_lock lock(mu_);
    std::ifstream in(path_of(key), std::ios::binary);
    if (!in) return std::nullopt;
    try {
      auto j = nlohmann::json::parse(in);
      CachedResponse r;
      r.text = j.at("text").get<std::string>();
      r.usage.prompt_tokens = j.value("prompt_tokens", 0LL);
      r.usage.completion_tokens = j.value("completion_tokens", 0LL);
      return r;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }

  void store(const std::string& key, const CachedResponse& r) {
    nlohmann::json j{{"text", r.text},
                     {"prompt_tokens", r.usage.prompt_tokens},
                     {"completion_tokens", r.usage.completion_tokens}};
    std::unique_lock lock(mu_);
    auto final_path = path_of(key);
    auto tmp = final_path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write cache entry " + tmp.string());
      out << j.dump();
    }
    std::filesystem::rename(tmp, final_path);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_of(const std::string& key) const { return dir_ / (key + ".json"); }

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
};

// ------------------------------------------------------------------ client

struct Completion {
  std::string text;
  bool cache_hit = false;
  std::chrono::milliseconds latency{0};
  TokenUsage usage;
  int attempts = 0;
};

/// Content of choices[0].message; a list of text parts is concatenated.
inline CachedResponse parse_chat_response(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ClientError(ClientError::Kind::bad_response, std::string("response is not JSON: ") + e.what());
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw ClientError(ClientError::Kind::bad_response, "response has no choices");
  }
  const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
  CachedResponse r;
  if (msg.contains("content")) {
    const auto& c = msg["content"];
    if (c.is_string()) {
      r.text = c.get<std::string>();
    } else if (c.is_array()) {
      for (const auto& part : c) {
        if (part.value("type", "") == "text") r.text += part.value("text", "");
      }
    }
  }
  if (r.text.empty()) throw ClientError(ClientError::Kind::empty_content, "response content is empty");
  if (j.contains("usage") && j["usage"].is_object()) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0LL);
    r.usage.completion_tokens = j["usage"].value("completion_tokens", 0LL);
  }
  return r;
}

class ChatClient {
 public:
  struct Options {
    RetryPolicy retry;
    std::size_t max_in_flight = 4;
    std::uint64_t jitter_seed = std::random_device{}();
  };

  ChatClient(ModelEndpoint endpoint, std::shared_ptr<Transport> transport, std::shared_ptr<ResponseCache> cache,
             Options options)
      : endpoint_(std::move(endpoint)),
        transport_(std::move(transport)),
        cache_(std::move(cache)),
        retry_(std::move(options.retry)),
        in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options.max_in_flight))),
        rng_(options.jitter_seed) {
    endpoint_.validate();
    if (!transport_) throw ClientError(ClientError::Kind::config, "no transport");
    if (retry_.max_attempts < 1) throw ClientError(ClientError::Kind::config, "retry cap must be >= 1");
  }

  ChatClient(ModelEndpoint endpoint, std::shared_ptr<Transport> transport, std::shared_ptr<ResponseCache> cache = {})
      : ChatClient(std::move(endpoint), std::move(transport), std::move(cache), Options{}) {}

  const ModelEndpoint& endpoint() const { return endpoint_; }

  Completion complete(const std::vector<Message>& messages) {
    if (messages.empty()) throw ClientError(ClientError::Kind::config, "no messages to send");
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    };
    std::string key;
    if (cache_) {
      key = ResponseCache::key(endpoint_, messages);
      if (auto hit = cache_->lookup(key)) return {hit->text, true, elapsed(), hit->usage, 0};
    }

    HttpRequest req;
    req.base_url = endpoint_.base_url;
    req.timeout = endpoint_.timeout;
    req.body = nlohmann::json{{"model", endpoint_.model_name},
                              {"messages", to_json(messages)},
                              {"temperature", endpoint_.temperature},
                              {"max_tokens", endpoint_.max_tokens}}
                   .dump();
    if (const char* k = std::getenv(endpoint_.api_key_ref.c_str()); k && *k) {
      req.headers.emplace_back("Authorization", std::string("Bearer ") + k);
    }

    std::string last_failure;
    for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
      if (attempt > 1) retry_.sleep(retry_.delay(attempt - 1, jitter_draw()));
      HttpResponse res;
      try {
        in_flight_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{in_flight_};
        res = transport_->post_chat(req);
      } catch (const TransportFailure& e) {
        last_failure = e.what();
        continue;
      }
      if (res.status == 200) {
        auto parsed = parse_chat_response(res.body);
        if (cache_) cache_->store(key, parsed);
        return {parsed.text, false, elapsed(), parsed.usage, attempt};
      }
      if (res.status == 401 || res.status == 403) {
        throw ClientError(ClientError::Kind::auth, "authentication rejected (HTTP " + std::to_string(res.status) +
                                                       "); check $" + endpoint_.api_key_ref);
      }
      if (!RetryPolicy::retryable_status(res.status)) {
        throw ClientError(ClientError::Kind::http, "HTTP " + std::to_string(res.status) + ": " + res.body);
      }
      last_failure = "HTTP " + std::to_string(res.status);
    }
    throw ClientError(ClientError::Kind::exhausted, "gave up after " + std::to_string(retry_.max_attempts) +
                                                        " attempts; last failure: " + last_failure);
  }

 private:
  double jitter_draw() {
    std::lock_guard lock(rng_mu_);
    return std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
  }

  ModelEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  RetryPolicy retry_;
  std::counting_semaphore<> in_flight_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------- dialogue

struct Round {
  std::vector<Message> request_messages;
  std::string prompt;
  std::string response_text;
  std::chrono::milliseconds latency{0};
  TokenUsage usage;
  bool cache_hit = false;
};

struct Transcript {
  std::string item_id;
  Strategy strategy;
  std::vector<Round> rounds;
};

class DialogueError : public Error {
 public:
  DialogueError(std::size_t round, const std::string& what, Transcript partial)
      : Error("round " + std::to_string(round) + ": " + what), round_(round), partial_(std::move(partial)) {}
  /// 1-based index of the failed round.
  std::size_t round() const { return round_; }
  const Transcript& partial() const { return partial_; }

 private:
  std::size_t round_;
  Transcript partial_;
};

/// Executes a plan. Later rounds carry the earlier exchanges as history and
/// receive the bindings from bind_second_round.
inline Transcript run_dialogue(ChatClient& client, const DialoguePlan& plan, const EvalItem& item,
                               std::size_t frames = 32) {
  Transcript t{item.id, plan.strategy, {}};
  std::vector<Message> history;
  Bindings prior;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    try {
      if (i == 1) prior = bind_second_round(plan, t.rounds[0].prompt, t.rounds[0].response_text);
      Round r;
      r.prompt = render_step(plan, i, item, prior);
      auto images = plan.steps[i].carries_attachments ? attachment_parts(item, frames) : std::vector<ContentPart>{};
      r.request_messages = history;
      r.request_messages.push_back(user_message(r.prompt, std::move(images)));
      auto c = client.complete(r.request_messages);
      r.response_text = c.text;
      r.latency = c.latency;
      r.usage = c.usage;
      r.cache_hit = c.cache_hit;
      history = r.request_messages;
      history.push_back(assistant_message(c.text));
      t.rounds.push_back(std::move(r));
    } catch (const DialogueError&) {
      throw;
    } catch (const std::exception& e) {
      throw DialogueError(i + 1, e.what(), t);
    }
  }
  return t;
}

/// Transcript as JSON with image payloads replaced by their size.
inline nlohmann::json transcript_json(const Transcript& t) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : t.rounds) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : r.request_messages) {
      nlohmann::json parts = nlohmann::json::array();
      for (const auto& p : m.content) {
        if (p.type == ContentPart::Type::text) {
          parts.push_back({{"type", "text"}, {"text", p.value}});
        } else {
          parts.push_back({{"type", "image_url"}, {"bytes", p.value.size()}});
        }
      }
      msgs.push_back({{"role", m.role}, {"content", parts}});
    }
    rounds.push_back({{"request_messages", msgs},
                      {"response_text", r.response_text},
                      {"latency_ms", r.latency.count()},
                      {"prompt_tokens", r.usage.prompt_tokens},
                      {"completion_tokens", r.usage.completion_tokens},
                      {"cache_hit", r.cache_hit}});
  }
  return {{"item_id", t.item_id}, {"strategy", t.strategy.label()}, {"rounds", rounds}};
}

}  // namespace vcal
