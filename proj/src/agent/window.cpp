#include "mlharness/agent/agent.hpp"
#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::agent {

namespace {

// Keeps the last `keep` code points of `text`.
std::string utf8_tail(const std::string& text, std::size_t keep) {
  std::size_t total = utf8_length(text);
  if (total <= keep) return text;
  std::size_t skip = total - keep;
  std::size_t i = 0;
  while (i < text.size() && skip > 0) {
    ++i;
    while (i < text.size() && (static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) ++i;
    --skip;
  }
  return text.substr(i);
}

}  // namespace

std::size_t estimate_tokens(const std::string& text) { return (utf8_length(text) + 3) / 4; }

std::size_t ConversationWindow::token_estimate() const {
  std::size_t total = 0;
  for (const auto& m : messages) total += estimate_tokens(m.text);
  return total;
}

ConversationWindow truncate_window(ConversationWindow window) {
  auto& msgs = window.messages;
  const bool has_system = !msgs.empty() && msgs.front().role == "system";
  const std::size_t first_evictable = has_system ? 1 : 0;
  if (has_system && estimate_tokens(msgs.front().text) > window.max_input_tokens) {
    throw SystemPromptTooLarge("system instruction needs " + std::to_string(estimate_tokens(msgs.front().text)) +
                               " tokens; the cap is " + std::to_string(window.max_input_tokens));
  }
  const std::size_t max_messages = std::max<std::size_t>(window.max_messages, first_evictable + 1);
  while (msgs.size() > first_evictable + 1 &&
         (msgs.size() > max_messages || window.token_estimate() > window.max_input_tokens)) {
    msgs.erase(msgs.begin() + static_cast<std::ptrdiff_t>(first_evictable));
  }
  if (msgs.size() > first_evictable && window.token_estimate() > window.max_input_tokens) {
    const std::size_t used = has_system ? estimate_tokens(msgs.front().text) : 0;
    const std::size_t budget_tokens = window.max_input_tokens - used;
    Message& last = msgs.back();
    last.text = utf8_tail(last.text, budget_tokens * 4);
    if (estimate_tokens(last.text) > budget_tokens) last.text.clear();
  }
  return window;
}

}  // namespace mlharness::agent
