#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <thread>

#include "mlharness/agent/agent.hpp"
#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::agent {

using json = nlohmann::json;

namespace {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

UrlParts split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw InvalidArgument("base_url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  UrlParts p;
  p.origin = url.substr(0, slash);
  p.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  return p;
}

std::optional<Usage> parse_usage(const json& j) {
  if (!j.is_object()) return std::nullopt;
  if (!j.contains("prompt_tokens") || !j.contains("completion_tokens")) return std::nullopt;
  if (!j["prompt_tokens"].is_number_integer() || !j["completion_tokens"].is_number_integer()) return std::nullopt;
  return Usage{j["prompt_tokens"].get<std::int64_t>(), j["completion_tokens"].get<std::int64_t>()};
}

}  // namespace

void LlmEndpoint::validate() const {
  if (!(temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("top_p must be in (0, 1]");
  if (max_output_tokens < 1) throw InvalidArgument("max_output_tokens must be >= 1");
  if (!(request_timeout_seconds > 0.0)) throw InvalidArgument("request timeout must be positive");
  if (!(prompt_token_price >= 0.0) || !(completion_token_price >= 0.0)) {
    throw InvalidArgument("token prices must be >= 0");
  }
}

ScriptedClient::ScriptedClient(std::vector<Completion> responses) {
  for (auto& c : responses) responses_.push_back({std::move(c), ""});
}

std::unique_ptr<ScriptedClient> ScriptedClient::from_jsonl(const std::string& text) {
  std::unique_ptr<ScriptedClient> client(new ScriptedClient());
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw Malformed("scripted response line " + std::to_string(line_no) + " is not JSON");
    }
    if (j.is_string()) {
      client->responses_.push_back({Completion{j.get<std::string>(), std::nullopt}, ""});
    } else if (j.is_object() && j.contains("error")) {
      client->responses_.push_back({std::nullopt, j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump()});
    } else if (j.is_object() && j.contains("text") && j["text"].is_string()) {
      client->responses_.push_back(
          {Completion{j["text"].get<std::string>(), parse_usage(j.value("usage", json()))}, ""});
    } else {
      throw Malformed("scripted response line " + std::to_string(line_no) +
                      " must be a string or an object with text or error");
    }
  }
  return client;
}

std::unique_ptr<ScriptedClient> ScriptedClient::from_file(const std::string& path) {
  return from_jsonl(read_file(path));
}

Completion ScriptedClient::complete(const std::vector<Message>& messages, const LlmEndpoint&) {
  requests_.push_back(messages);
  if (next_ >= responses_.size()) throw EndpointUnavailable("scripted endpoint has no responses left");
  const Entry& e = responses_[next_++];
  if (!e.completion) throw EndpointUnavailable("scripted failure: " + e.error);
  return *e.completion;
}

Completion HttpChatClient::complete(const std::vector<Message>& messages, const LlmEndpoint& endpoint) {
  const UrlParts url = split_url(endpoint.base_url);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration<double>(endpoint.request_timeout_seconds);
  const auto secs = static_cast<time_t>(endpoint.request_timeout_seconds);
  const auto usecs = static_cast<time_t>((endpoint.request_timeout_seconds - std::floor(timeout.count())) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  json body = {{"model", endpoint.model},
               {"temperature", endpoint.temperature},
               {"top_p", endpoint.top_p},
               {"max_tokens", endpoint.max_output_tokens},
               {"messages", json::array()}};
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.text}});

  const auto res = client.Post(url.path + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw EndpointUnavailable("request to " + endpoint.base_url + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw EndpointUnavailable("endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    const json j = json::parse(res->body);
    const json& content = j.at("choices").at(0).at("message").at("content");
    Completion c;
    c.text = content.is_string() ? content.get<std::string>() : "";
    c.usage = parse_usage(j.value("usage", json()));
    return c;
  } catch (const json::exception& e) {
    throw EndpointUnavailable(std::string("unreadable endpoint response: ") + e.what());
  }
}

Completion complete_with_retry(ChatClient& client, const std::vector<Message>& messages,
                               const LlmEndpoint& endpoint, const RetryPolicy& policy) {
  const std::size_t attempts = std::max<std::size_t>(1, policy.attempts);
  double backoff = policy.initial_backoff_seconds;
  std::string last;
  for (std::size_t i = 0; i < attempts; ++i) {
    try {
      return client.complete(messages, endpoint);
    } catch (const EndpointUnavailable& e) {
      last = e.what();
    }
    if (i + 1 < attempts && backoff > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    }
    backoff *= policy.multiplier;
  }
  throw EndpointUnavailable("gave up after " + std::to_string(attempts) + " attempts: " + last);
}

}  // namespace mlharness::agent
