#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mlharness/sandbox/sandbox.hpp"

namespace mlharness::sandbox::detail {

using Clock = std::chrono::steady_clock;

struct ProcessSpec {
  std::string command;
  std::filesystem::path cwd;
  std::vector<std::string> env;
  Clock::time_point deadline;
  std::uint64_t memory_limit = 0;
  std::size_t stream_cap = 0;
  // Landlock ruleset to enforce in the child, or -1.
  int ruleset_fd = -1;
  bool isolate_network = false;
};

// Runs `/bin/sh -c command` in its own process group. Never throws for
// program behaviour; IoError when the process cannot be started.
RawProcessResult run_process(const ProcessSpec& spec);

// -1 when unsupported.
int landlock_abi();

// Builds (but does not enforce) a ruleset granting read/exec under
// `read_paths` and full access under `write_paths`. Returns an owned fd.
int build_ruleset(const std::vector<std::filesystem::path>& read_paths,
                  const std::vector<std::filesystem::path>& write_paths, bool deny_network);

// Applied in the forked child only; async-signal-safe.
bool restrict_self(int ruleset_fd);

std::string truncate_stream(const std::string& data, std::size_t total_bytes, std::size_t cap);

}  // namespace mlharness::sandbox::detail
