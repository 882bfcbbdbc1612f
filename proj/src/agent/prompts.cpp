#include <algorithm>
#include <cstring>
#include <sstream>

#include "mlharness/agent/agent.hpp"
#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::agent {

namespace {

bool is_placeholder(const std::string& name) {
  return std::any_of(kPlaceholders.begin(), kPlaceholders.end(),
                     [&](const char* p) { return name == p; });
}

// Returns placeholder names in order of appearance; throws MissingPlaceholder
// on an unterminated or unknown name.
std::vector<std::string> scan_template(const std::string& templ) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < templ.size(); ++i) {
    const char c = templ[i];
    if (c == '{') {
      if (i + 1 < templ.size() && templ[i + 1] == '{') {
        ++i;
        continue;
      }
      const auto close = templ.find('}', i + 1);
      if (close == std::string::npos) throw MissingPlaceholder("unterminated placeholder at offset " + std::to_string(i));
      const std::string name = templ.substr(i + 1, close - i - 1);
      if (!is_placeholder(name)) throw MissingPlaceholder("undefined placeholder {" + name + "}");
      names.push_back(name);
      i = close;
    } else if (c == '}' && i + 1 < templ.size() && templ[i + 1] == '}') {
      ++i;
    }
  }
  return names;
}

std::string format_bytes(std::uint64_t bytes) {
  const double mib = static_cast<double>(bytes) / (1024.0 * 1024.0);
  if (mib >= 1024.0) return format_fixed(mib / 1024.0, 1) + " GiB";
  return format_fixed(mib, 0) + " MiB";
}

std::string render_catalog(const std::vector<env::ActionInfo>& catalog) {
  std::ostringstream out;
  for (const auto& a : catalog) {
    out << "- " << a.name << ": " << a.description << "\n  arguments: " << a.arguments << "\n";
  }
  return out.str();
}

}  // namespace

std::string fill_template(const std::string& templ, const std::map<std::string, std::string>& values) {
  scan_template(templ);
  std::string out;
  out.reserve(templ.size());
  for (std::size_t i = 0; i < templ.size(); ++i) {
    const char c = templ[i];
    if (c == '{') {
      if (i + 1 < templ.size() && templ[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      const auto close = templ.find('}', i + 1);
      const std::string name = templ.substr(i + 1, close - i - 1);
      const auto it = values.find(name);
      if (it == values.end()) throw MissingPlaceholder("no value for placeholder {" + name + "}");
      out += it->second;
      i = close;
    } else if (c == '}' && i + 1 < templ.size() && templ[i + 1] == '}') {
      out.push_back('}');
      ++i;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.system_instruction =
      "You are a machine learning engineer working on a competition task inside an "
      "interactive environment. Each reply you send performs exactly one action.\n\n"
      "# Task\n{description}\n\n"
      "# Actions\n{actions}\n"
      "# Output format\n"
      "Reply with a line `ACTION: <name>`. For validate_code and execute_code, follow it with "
      "a fenced code block holding the complete Python program. For get_history the block "
      "may hold the number of records to return. Programs read data from ./input and must "
      "write ./output/submission.csv when executed as a submission; other files belong in ./output, "
      "./code or ./tmp.\n\n"
      "# Environment\nYou have {remaining_steps} steps. Improve the score step by step; the best "
      "scored submission counts.";
  p.error_prompt =
      "Step {step} failed. {remaining_steps} steps remain.\n\n{feedback}\n\n"
      "Fix the problem and reply with the next action.";
  p.reflection_prompt =
      "Step {step} finished. {remaining_steps} steps remain. Score: {score}\n\n{feedback}\n\n"
      "Consider what to improve and reply with the next action.";
  p.parse_error_prompt =
      "Your last reply could not be parsed: {feedback}\n"
      "Reply with a line `ACTION: <name>` followed, where needed, by a fenced block.";
  return p;
}

void PromptSet::validate() const {
  const std::pair<const char*, const std::string*> all[] = {{"system_instruction", &system_instruction},
                                                            {"error_prompt", &error_prompt},
                                                            {"reflection_prompt", &reflection_prompt},
                                                            {"parse_error_prompt", &parse_error_prompt}};
  for (const auto& [name, templ] : all) {
    if (trim(*templ).empty()) throw InvalidArgument(std::string(name) + " is empty");
    scan_template(*templ);
  }
}

std::string build_system_prompt(const std::string& description, const std::vector<env::ActionInfo>& catalog,
                                const PromptLimits& limits, const PromptSet& prompts) {
  if (catalog.empty()) throw InvalidArgument("action catalog is empty");
  const std::map<std::string, std::string> values = {
      {"description", description},
      {"actions", render_catalog(catalog)},
      {"feedback", ""},
      {"score", "none"},
      {"step", "0"},
      {"remaining_steps", std::to_string(limits.max_steps)},
  };
  std::string text = fill_template(prompts.system_instruction, values);
  std::ostringstream env;
  env << "\n\n# Limits\n"
      << "step budget: " << limits.max_steps << "\n"
      << "time limit per run: " << format_fixed(limits.time_limit, 0) << " s\n"
      << "memory limit per run: " << format_bytes(limits.memory_limit) << "\n";
  return text + env.str();
}

PromptKind select_prompt(const FollowupContext& ctx) {
  if (ctx.parse_error) return PromptKind::ParseError;
  if (ctx.observation) {
    if (ctx.observation->error_class()) return PromptKind::Error;
    if (std::holds_alternative<env::ActionError>(ctx.observation->payload)) return PromptKind::Error;
  }
  return PromptKind::Reflection;
}

std::string build_followup_prompt(const FollowupContext& ctx, const PromptSet& prompts) {
  const PromptKind kind = select_prompt(ctx);
  std::string feedback;
  if (kind == PromptKind::ParseError) {
    feedback = *ctx.parse_error;
  } else if (ctx.observation) {
    feedback = ctx.observation->feedback_text;
  }
  const std::map<std::string, std::string> values = {
      {"description", ""},
      {"actions", ""},
      {"feedback", feedback},
      {"score", ctx.reward ? format_fixed(*ctx.reward, 6) : "none"},
      {"step", std::to_string(ctx.step)},
      {"remaining_steps", std::to_string(ctx.remaining_steps)},
  };
  switch (kind) {
    case PromptKind::ParseError:
      return fill_template(prompts.parse_error_prompt, values);
    case PromptKind::Error:
      return fill_template(prompts.error_prompt, values);
    case PromptKind::Reflection:
      break;
  }
  return fill_template(prompts.reflection_prompt, values);
}

std::string kickoff_message(std::size_t max_steps) {
  return "Begin the task. You have " + std::to_string(max_steps) +
         " steps. Reply with your first action.";
}

}  // namespace mlharness::agent
