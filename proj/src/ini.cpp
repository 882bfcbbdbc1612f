#include "mlharness/ini.hpp"

#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness {

namespace pt = boost::property_tree;

IniDocument IniDocument::parse(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Malformed(std::string("ini syntax error: ") + e.message() + " at line " +
                    std::to_string(e.line()));
  }
  IniDocument doc;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      if (!doc.sections_.count("")) doc.order_.insert(doc.order_.begin(), "");
      doc.sections_[""][key] = trim(node.data());
      continue;
    }
    if (!doc.sections_.count(key)) doc.order_.push_back(key);
    auto& section = doc.sections_[key];
    for (const auto& [k, v] : node) section[k] = trim(v.data());
  }
  return doc;
}

IniDocument IniDocument::load(const std::string& path) { return parse(read_file(path)); }

std::optional<std::string> IniDocument::get(const std::string& section,
                                            const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

std::string IniDocument::get_or(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
  return get(section, key).value_or(fallback);
}

const std::map<std::string, std::string>& IniDocument::section(const std::string& name) const {
  static const std::map<std::string, std::string> kEmpty;
  const auto it = sections_.find(name);
  return it == sections_.end() ? kEmpty : it->second;
}

}  // namespace mlharness
