#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mlharness/agent/agent.hpp"
#include "mlharness/cli/cli.hpp"
#include "mlharness/env/env.hpp"

namespace mlh_test {

namespace fs = std::filesystem;

// Fresh directory removed (read-only entries included) on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "mlh-test");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& child) const { return path_ / child; }

 private:
  fs::path path_;
};

void remove_tree(const fs::path& p);

// Environment defaults for tests: workspaces under `scratch`, 30 s limit.
mlharness::env::EnvConfig test_env_config(const fs::path& scratch, std::size_t max_steps = 15);

struct Fixture {
  mlharness::cli::FixtureInfo info;
  mlharness::registry::CompetitionManifest manifest;
};

Fixture make_fixture(const fs::path& parent, std::uint64_t seed = 7, const std::string& metric = "rmse");

// Wire text of request_info, validate_code, execute_code, get_history.
std::vector<std::string> known_good_script(const std::string& solution_code);

// JSONL form accepted by ScriptedClient.
std::string to_jsonl(const std::vector<std::string>& responses);

std::vector<std::string> read_lines(const fs::path& p);

// Every file below `root` as relative path -> contents.
std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& root);

}  // namespace mlh_test
