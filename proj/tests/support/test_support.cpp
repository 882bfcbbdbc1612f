#include "support/test_support.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "mlharness/common.hpp"

namespace mlh_test {

TempDir::TempDir(const std::string& prefix) {
  std::string templ = (fs::temp_directory_path() / (prefix + "-XXXXXX")).string();
  if (!mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
  path_ = templ;
}

TempDir::~TempDir() { remove_tree(path_); }

void remove_tree(const fs::path& p) {
  std::error_code ec;
  if (!fs::exists(p, ec)) return;
  for (auto it = fs::recursive_directory_iterator(p, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_directory() && !it->is_symlink()) {
      fs::permissions(it->path(), fs::perms::owner_all, fs::perm_options::add, ec);
    }
  }
  fs::permissions(p, fs::perms::owner_all, fs::perm_options::add, ec);
  fs::remove_all(p, ec);
}

mlharness::env::EnvConfig test_env_config(const fs::path& scratch, std::size_t max_steps) {
  mlharness::env::EnvConfig cfg;
  cfg.max_steps = max_steps;
  cfg.sandbox.base_dir = scratch;
  cfg.sandbox.time_limit = 30.0;
  return cfg;
}

Fixture make_fixture(const fs::path& parent, std::uint64_t seed, const std::string& metric) {
  mlharness::cli::FixtureSpec spec;
  spec.metric = metric;
  Fixture f;
  f.info = mlharness::cli::generate_fixture_competition(parent, seed, spec);
  f.manifest = mlharness::registry::load_competition(f.info.root);
  return f;
}

std::vector<std::string> known_good_script(const std::string& solution_code) {
  return {"I will start by reading the task.\nACTION: request_info",
          "ACTION: validate_code\n```python\n" + solution_code + "```",
          "ACTION: execute_code\n```python\n" + solution_code + "```",
          "ACTION: get_history\n```\n2\n```"};
}

std::string to_jsonl(const std::vector<std::string>& responses) {
  std::string out;
  for (const auto& r : responses) out += nlohmann::json(r).dump() + "\n";
  return out;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> out;
  for (auto& l : mlharness::split(mlharness::read_file(p.string()), '\n')) {
    if (!l.empty()) out.push_back(std::move(l));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    out.emplace_back(fs::relative(e.path(), root).string(), mlharness::read_file(e.path().string()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mlh_test
