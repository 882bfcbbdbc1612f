#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mlharness/env/env.hpp"

namespace mlharness::agent {

// ---- prompts -------------------------------------------------------------

inline constexpr std::array<const char*, 6> kPlaceholders = {
    "description", "actions", "feedback", "score", "step", "remaining_steps"};

// Replaces {name} with values[name]; "{{" and "}}" yield literal braces.
// Throws MissingPlaceholder for a name outside kPlaceholders or absent from
// `values`.
std::string fill_template(const std::string& templ, const std::map<std::string, std::string>& values);

struct PromptSet {
  std::string system_instruction;
  std::string error_prompt;
  std::string reflection_prompt;
  std::string parse_error_prompt;

  static PromptSet defaults();
  // Throws MissingPlaceholder or InvalidArgument (empty template).
  void validate() const;
};

struct PromptLimits {
  std::size_t max_steps = 15;
  double time_limit = 0.0;
  std::uint64_t memory_limit = 0;
};

// Throws MissingPlaceholder; InvalidArgument for an empty catalog.
std::string build_system_prompt(const std::string& description,
                                const std::vector<env::ActionInfo>& catalog,
                                const PromptLimits& limits, const PromptSet& prompts);

struct FollowupContext {
  // Absent when the last model output failed to parse.
  const env::Observation* observation = nullptr;
  std::optional<double> reward;
  std::size_t step = 0;
  std::size_t remaining_steps = 0;
  std::optional<std::string> parse_error;
};

enum class PromptKind { Error, Reflection, ParseError };
PromptKind select_prompt(const FollowupContext& ctx);
std::string build_followup_prompt(const FollowupContext& ctx, const PromptSet& prompts);

// Fixed first user turn of every episode.
std::string kickoff_message(std::size_t max_steps);

// ---- action wire format --------------------------------------------------

enum class ParseFailureReason { MissingHeader, UnknownAction, MissingPayload, BadPayload };
std::string to_string(ParseFailureReason r);

struct ParseFailure {
  ParseFailureReason reason = ParseFailureReason::MissingHeader;
  std::string detail;

  bool operator==(const ParseFailure& o) const { return reason == o.reason; }
};

struct ParsedAction {
  std::variant<env::Action, ParseFailure> value;

  bool ok() const { return value.index() == 0; }
  const env::Action& action() const { return std::get<env::Action>(value); }
  const ParseFailure& failure() const { return std::get<ParseFailure>(value); }
  bool operator==(const ParsedAction& o) const { return value == o.value; }
};

// Grammar: a line `ACTION: <name>`, optionally followed by a fenced block
// holding the payload. `custom_actions` extends the native names.
ParsedAction parse_action(const std::string& model_output,
                          const std::vector<std::string>& custom_actions = {});
std::string render_action(const env::Action& action);
std::string render(const ParsedAction& parsed);

// ---- conversation window -------------------------------------------------

struct Message {
  std::string role;  // system | user | assistant
  std::string text;

  bool operator==(const Message&) const = default;
};

inline constexpr std::size_t kDefaultInputTokens = 50000;

// ceil(code points / 4).
std::size_t estimate_tokens(const std::string& text);

struct ConversationWindow {
  std::vector<Message> messages;
  std::size_t max_messages = 30;
  std::size_t max_input_tokens = kDefaultInputTokens;

  std::size_t token_estimate() const;
};

// Evicts the oldest non-system messages until both caps hold. The newest
// message is kept; if it alone overflows, its head is clipped. Throws
// SystemPromptTooLarge.
ConversationWindow truncate_window(ConversationWindow window);

// ---- endpoints -----------------------------------------------------------

struct LlmEndpoint {
  std::string name;
  std::string base_url;
  std::string model;
  double temperature = 0.0;
  double top_p = 1.0;
  double request_timeout_seconds = 600.0;
  std::size_t max_output_tokens = 8192;
  // Environment variable holding the bearer token; empty sends none.
  std::string api_key_env;
  double prompt_token_price = 0.0;
  double completion_token_price = 0.0;

  // Throws InvalidArgument.
  void validate() const;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct Completion {
  std::string text;
  std::optional<Usage> usage;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Throws EndpointUnavailable.
  virtual Completion complete(const std::vector<Message>& messages, const LlmEndpoint& endpoint) = 0;
};

// Canned responses consumed in order. Each JSONL line is a JSON string, or an
// object {"text": ..., "usage": {...}} or {"error": ...}.
class ScriptedClient : public ChatClient {
 public:
  explicit ScriptedClient(std::vector<Completion> responses);
  // Throws IoError, Malformed.
  static std::unique_ptr<ScriptedClient> from_file(const std::string& path);
  static std::unique_ptr<ScriptedClient> from_jsonl(const std::string& text);

  Completion complete(const std::vector<Message>& messages, const LlmEndpoint& endpoint) override;
  std::size_t remaining() const { return responses_.size() - next_; }
  // Messages of every request, for inspection.
  const std::vector<std::vector<Message>>& requests() const { return requests_; }

 private:
  struct Entry {
    std::optional<Completion> completion;
    // Raised as EndpointUnavailable when completion is absent.
    std::string error;
  };
  ScriptedClient() = default;

  std::vector<Entry> responses_;
  std::size_t next_ = 0;
  std::vector<std::vector<Message>> requests_;
};

// OpenAI-compatible `POST {base_url}/chat/completions`.
class HttpChatClient : public ChatClient {
 public:
  Completion complete(const std::vector<Message>& messages, const LlmEndpoint& endpoint) override;
};

struct RetryPolicy {
  std::size_t attempts = 3;
  double initial_backoff_seconds = 1.0;
  double multiplier = 2.0;
};

// Throws EndpointUnavailable once every attempt failed.
Completion complete_with_retry(ChatClient& client, const std::vector<Message>& messages,
                               const LlmEndpoint& endpoint, const RetryPolicy& policy);

// ---- episodes ------------------------------------------------------------

struct AgentConfig {
  std::size_t max_parse_retries = 3;
  // Defaults to 2 * max_steps.
  std::optional<std::size_t> max_messages;
  std::size_t max_input_tokens = kDefaultInputTokens;
  RetryPolicy retry;
};

struct StepUsage {
  std::size_t step = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double estimated_cost = 0.0;
  bool reported = false;
};

std::string usage_to_csv(const std::vector<StepUsage>& usage);

enum class EpisodeEnd { BudgetDone, ParseFailures, ActionCap };
std::string to_string(EpisodeEnd e);

struct EpisodeResult {
  // Archive of the session: reset markers (step_index 0) included.
  std::vector<env::TrajectoryRecord> trajectory;
  std::optional<double> best_human_rank;
  std::vector<StepUsage> usage;
  EpisodeEnd end = EpisodeEnd::BudgetDone;
  std::string end_detail;
  std::size_t env_steps = 0;
  std::size_t parse_failures = 0;
};

// Requires a fresh session (InvalidArgument otherwise). Throws
// EndpointUnavailable once the retry policy is exhausted; records already
// taken stay in the session.
EpisodeResult run_episode(env::EnvSession& session, ChatClient& client, const LlmEndpoint& endpoint,
                          const PromptSet& prompts, const AgentConfig& config = {});

using SessionFactory = std::function<std::unique_ptr<env::EnvSession>(std::size_t episode)>;
using ClientFactory = std::function<std::unique_ptr<ChatClient>(std::size_t episode)>;

struct BestOfK {
  std::size_t best_index = 0;
  std::vector<EpisodeResult> episodes;

  const EpisodeResult& best() const { return episodes.at(best_index); }
};

// Runs k episodes on fresh sessions; highest best_human_rank wins, ties and
// unscored episodes resolve to the earliest.
BestOfK best_of_k(const SessionFactory& sessions, const ClientFactory& clients,
                  const LlmEndpoint& endpoint, const PromptSet& prompts, std::size_t k,
                  const AgentConfig& config = {});

}  // namespace mlharness::agent
