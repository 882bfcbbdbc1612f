#include <sstream>

#include "mlharness/agent/agent.hpp"
#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::agent {

std::string to_string(EpisodeEnd e) {
  switch (e) {
    case EpisodeEnd::BudgetDone:
      return "BudgetDone";
    case EpisodeEnd::ParseFailures:
      return "ParseFailures";
    case EpisodeEnd::ActionCap:
      return "ActionCap";
  }
  return "BudgetDone";
}

std::string usage_to_csv(const std::vector<StepUsage>& usage) {
  std::ostringstream out;
  out << "step,prompt_tokens,completion_tokens,estimated_cost\n";
  for (const auto& u : usage) {
    out << u.step << ',' << u.prompt_tokens << ',' << u.completion_tokens << ','
        << format_fixed(u.estimated_cost, 6) << '\n';
  }
  return out.str();
}

EpisodeResult run_episode(env::EnvSession& session, ChatClient& client, const LlmEndpoint& endpoint,
                          const PromptSet& prompts, const AgentConfig& config) {
  if (session.step_count() != 0 || !session.trajectory().empty()) {
    throw InvalidArgument("run_episode needs a fresh session");
  }
  prompts.validate();
  endpoint.validate();

  const std::size_t max_steps = session.max_steps();
  const auto catalog = session.action_catalog();
  std::vector<std::string> custom;
  for (const auto& a : catalog) {
    if (!env::is_native_action(a.name)) custom.push_back(a.name);
  }
  PromptLimits limits;
  limits.max_steps = max_steps;
  limits.time_limit = session.sandbox_config().time_limit;
  limits.memory_limit = session.sandbox_config().memory_limit;

  std::vector<Message> messages = {
      {"system", build_system_prompt(session.manifest().description, catalog, limits, prompts)},
      {"user", kickoff_message(max_steps)},
  };
  const std::size_t max_messages = config.max_messages.value_or(2 * max_steps);

  EpisodeResult result;
  std::size_t consecutive_failures = 0;
  std::size_t dispatched = 0;
  std::size_t query = 0;
  while (true) {
    if (session.done()) {
      result.end = EpisodeEnd::BudgetDone;
      break;
    }
    if (dispatched >= max_steps) {
      result.end = EpisodeEnd::ActionCap;
      result.end_detail = "dispatched " + std::to_string(dispatched) + " actions";
      break;
    }
    ConversationWindow window{std::move(messages), max_messages, config.max_input_tokens};
    window = truncate_window(std::move(window));
    messages = std::move(window.messages);

    const Completion completion = complete_with_retry(client, messages, endpoint, config.retry);
    StepUsage usage;
    usage.step = ++query;
    usage.reported = completion.usage.has_value();
    if (completion.usage) {
      usage.prompt_tokens = completion.usage->prompt_tokens;
      usage.completion_tokens = completion.usage->completion_tokens;
    } else {
      std::size_t prompt = 0;
      for (const auto& m : messages) prompt += estimate_tokens(m.text);
      usage.prompt_tokens = static_cast<std::int64_t>(prompt);
      usage.completion_tokens = static_cast<std::int64_t>(estimate_tokens(completion.text));
    }
    usage.estimated_cost = static_cast<double>(usage.prompt_tokens) * endpoint.prompt_token_price +
                           static_cast<double>(usage.completion_tokens) * endpoint.completion_token_price;
    result.usage.push_back(usage);
    messages.push_back({"assistant", completion.text});

    const ParsedAction parsed = parse_action(completion.text, custom);
    if (!parsed.ok()) {
      ++consecutive_failures;
      ++result.parse_failures;
      if (consecutive_failures >= config.max_parse_retries) {
        result.end = EpisodeEnd::ParseFailures;
        result.end_detail = to_string(parsed.failure().reason) + ": " + parsed.failure().detail;
        break;
      }
      FollowupContext ctx;
      ctx.step = session.step_count();
      ctx.remaining_steps = max_steps - session.step_count();
      ctx.parse_error = to_string(parsed.failure().reason) + ": " + parsed.failure().detail;
      messages.push_back({"user", build_followup_prompt(ctx, prompts)});
      continue;
    }
    consecutive_failures = 0;

    const env::StepResult step = session.step(parsed.action());
    ++dispatched;
    ++result.env_steps;
    if (step.done) {
      result.end = EpisodeEnd::BudgetDone;
      break;
    }
    FollowupContext ctx;
    ctx.observation = &step.observation;
    ctx.reward = step.reward;
    ctx.step = session.step_count();
    ctx.remaining_steps = max_steps - session.step_count();
    messages.push_back({"user", build_followup_prompt(ctx, prompts)});
  }

  result.trajectory = session.archive();
  for (const auto& r : result.trajectory) {
    if (r.reward && (!result.best_human_rank || *r.reward > *result.best_human_rank)) {
      result.best_human_rank = r.reward;
    }
  }
  return result;
}

BestOfK best_of_k(const SessionFactory& sessions, const ClientFactory& clients, const LlmEndpoint& endpoint,
                  const PromptSet& prompts, std::size_t k, const AgentConfig& config) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  BestOfK out;
  for (std::size_t i = 0; i < k; ++i) {
    auto session = sessions(i);
    auto client = clients(i);
    if (!session || !client) throw InvalidArgument("factory returned null for episode " + std::to_string(i));
    EpisodeResult r = run_episode(*session, *client, endpoint, prompts, config);
    session->close();
    const std::optional<double> best = out.episodes.empty() ? std::optional<double>() : out.best().best_human_rank;
    if (out.episodes.empty() || (r.best_human_rank && (!best || *r.best_human_rank > *best))) {
      out.best_index = i;
    }
    out.episodes.push_back(std::move(r));
  }
  return out;
}

}  // namespace mlharness::agent
