#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mlharness {

// Key/value text with optional [sections]; keys before the first section
// land in the "" section.
class IniDocument {
 public:
  // Throw Malformed on syntax errors, IoError on unreadable files.
  static IniDocument parse(const std::string& text);
  static IniDocument load(const std::string& path);

  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  const std::map<std::string, std::string>& section(const std::string& name) const;
  bool has_section(const std::string& name) const { return sections_.count(name) > 0; }
  // Section names in file order.
  const std::vector<std::string>& section_names() const { return order_; }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::vector<std::string> order_;
};

}  // namespace mlharness
