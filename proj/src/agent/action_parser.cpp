#include <algorithm>

#include "mlharness/agent/agent.hpp"
#include "mlharness/common.hpp"

namespace mlharness::agent {

namespace {

constexpr std::string_view kHeader = "ACTION:";

std::size_t fence_length(const std::string& line) {
  const std::string t = trim(line);
  std::size_t n = 0;
  while (n < t.size() && t[n] == '`') ++n;
  return n >= 3 ? n : 0;
}

bool closes_fence(const std::string& line, std::size_t open) {
  const std::string t = trim(line);
  return t.size() >= open && std::all_of(t.begin(), t.end(), [](char c) { return c == '`'; });
}

std::optional<std::string> header_name(const std::string& line) {
  const std::string t = trim(line);
  if (!starts_with(t, kHeader)) return std::nullopt;
  return trim(t.substr(kHeader.size()));
}

ParsedAction failure(ParseFailureReason reason, std::string detail) {
  return ParsedAction{ParseFailure{reason, std::move(detail)}};
}

struct Block {
  bool present = false;
  bool terminated = true;
  std::string text;
  std::size_t end_line = 0;  // first line after the block
};

// Reads a fenced block starting at the first non-blank line at or after `from`.
Block read_block(const std::vector<std::string>& lines, std::size_t from) {
  Block b;
  std::size_t i = from;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  if (i >= lines.size()) return b;
  const std::size_t open = fence_length(lines[i]);
  if (open == 0) return b;
  b.present = true;
  std::vector<std::string> body;
  std::size_t j = i + 1;
  for (; j < lines.size(); ++j) {
    if (closes_fence(lines[j], open)) break;
    body.push_back(lines[j]);
  }
  b.terminated = j < lines.size();
  b.text = join(body, "\n");
  b.end_line = b.terminated ? j + 1 : j;
  return b;
}

ParsedAction build(const std::string& name, const Block& block, const std::vector<std::string>& custom) {
  if (block.present && !block.terminated) {
    return failure(ParseFailureReason::BadPayload, "unterminated code fence after ACTION: " + name);
  }
  if (name == "validate_code" || name == "execute_code") {
    if (!block.present || trim(block.text).empty()) {
      return failure(ParseFailureReason::MissingPayload, name + " needs a fenced code block");
    }
    return ParsedAction{name == "execute_code" ? env::Action::execute_code(block.text)
                                               : env::Action::validate_code(block.text)};
  }
  if (name == "get_history") {
    if (!block.present || trim(block.text).empty()) return ParsedAction{env::Action::get_history()};
    const auto n = parse_int(trim(block.text));
    if (!n || *n < 1) return failure(ParseFailureReason::BadPayload, "get_history expects a positive integer");
    return ParsedAction{env::Action::get_history(*n)};
  }
  if (name == "request_info") return ParsedAction{env::Action::request_info()};
  if (name == "reset") return ParsedAction{env::Action::reset()};
  if (std::find(custom.begin(), custom.end(), name) == custom.end()) {
    return failure(ParseFailureReason::UnknownAction, "unknown action '" + name + "'");
  }
  env::json args = env::json::object();
  if (block.present && !trim(block.text).empty()) {
    try {
      args = env::json::parse(block.text);
    } catch (const env::json::exception&) {
      return failure(ParseFailureReason::BadPayload, name + " payload is not valid JSON");
    }
    if (!args.is_object()) return failure(ParseFailureReason::BadPayload, name + " payload must be a JSON object");
  }
  return ParsedAction{env::Action::custom(name, std::move(args))};
}

std::string fenced(const std::string& payload) {
  std::size_t longest = 0;
  std::size_t run = 0;
  for (char c : payload) {
    run = c == '`' ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  const std::string fence(std::max<std::size_t>(3, longest + 1), '`');
  return fence + "\n" + payload + "\n" + fence;
}

}  // namespace

std::string to_string(ParseFailureReason r) {
  switch (r) {
    case ParseFailureReason::MissingHeader:
      return "MissingHeader";
    case ParseFailureReason::UnknownAction:
      return "UnknownAction";
    case ParseFailureReason::MissingPayload:
      return "MissingPayload";
    case ParseFailureReason::BadPayload:
      return "BadPayload";
  }
  return "MissingHeader";
}

ParsedAction parse_action(const std::string& model_output, const std::vector<std::string>& custom_actions) {
  std::string text = model_output;
  text.erase(std::remove(text.begin(), text.end(), '\r'), text.end());
  const std::vector<std::string> lines = split(text, '\n');

  std::optional<ParsedAction> first_failure;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (const auto name = header_name(lines[i])) {
      const Block block = read_block(lines, i + 1);
      ParsedAction parsed = name->empty()
                                ? failure(ParseFailureReason::UnknownAction, "ACTION: header without a name")
                                : build(*name, block, custom_actions);
      if (parsed.ok()) return parsed;
      if (!first_failure) first_failure = std::move(parsed);
      i = block.present ? block.end_line : i + 1;
      continue;
    }
    // Headers inside stray code blocks do not count.
    if (const std::size_t open = fence_length(lines[i])) {
      ++i;
      while (i < lines.size() && !closes_fence(lines[i], open)) ++i;
      ++i;
      continue;
    }
    ++i;
  }
  if (first_failure) return *first_failure;
  return failure(ParseFailureReason::MissingHeader, "no line of the form `ACTION: <name>`");
}

std::string render_action(const env::Action& action) {
  std::string out = std::string(kHeader) + " " + action.name();
  switch (action.kind) {
    case env::ActionKind::ValidateCode:
    case env::ActionKind::ExecuteCode:
      return out + "\n" + fenced(action.args.value("code", std::string()));
    case env::ActionKind::GetHistory:
      if (action.args.contains("last_n") && action.args["last_n"].is_number_integer()) {
        return out + "\n" + fenced(std::to_string(action.args["last_n"].get<std::int64_t>()));
      }
      return out;
    case env::ActionKind::Custom:
      if (action.args.is_object() && !action.args.empty()) return out + "\n" + fenced(action.args.dump());
      return out;
    case env::ActionKind::RequestInfo:
    case env::ActionKind::Reset:
      break;
  }
  return out;
}

std::string render(const ParsedAction& parsed) {
  if (parsed.ok()) return render_action(parsed.action());
  // Re-parses to the same reason.
  switch (parsed.failure().reason) {
    case ParseFailureReason::MissingHeader:
      return "";
    case ParseFailureReason::UnknownAction:
      return std::string(kHeader) + " ?";
    case ParseFailureReason::MissingPayload:
      return std::string(kHeader) + " execute_code";
    case ParseFailureReason::BadPayload:
      return std::string(kHeader) + " get_history\n```\n0\n```";
  }
  return "";
}

}  // namespace mlharness::agent
