#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "mlharness/env/env.hpp"

namespace mlharness::env {

struct ServiceConfig {
  std::filesystem::path registry_root;
  EnvConfig env_defaults;
  // Sessions untouched for this long are closed by reap_idle().
  double idle_timeout_seconds = 1800.0;
  // Per-session trajectory files land here as <env_id>.jsonl when set.
  std::filesystem::path trajectory_dir;
};

struct Response {
  int status = 200;
  json body;
};

// Transport-independent implementation of the step protocol; the HTTP layer
// only maps routes onto these calls.
class EnvService {
 public:
  // Throws IoError when the registry cannot be listed.
  explicit EnvService(ServiceConfig config);
  ~EnvService();

  Response competitions() const;
  // {competition_slug, config?}
  Response create(const json& body);
  // {action_type, args}
  Response step(const std::string& env_id, const json& body);
  Response history(const std::string& env_id, const std::optional<std::string>& last_n);
  Response reset(const std::string& env_id);
  Response remove(const std::string& env_id);

  std::size_t reap_idle();
  // Closes every session, flushing trajectories.
  void shutdown();
  std::size_t session_count() const;

 private:
  struct Entry {
    std::shared_ptr<EnvSession> session;
    std::chrono::steady_clock::time_point last_used;
  };
  std::shared_ptr<EnvSession> find(const std::string& env_id);

  ServiceConfig config_;
  std::map<std::string, registry::CompetitionManifest> competitions_;
  mutable std::mutex mutex_;
  std::map<std::string, Entry> sessions_;
};

// Applies the recognised keys of a JSON config object onto `base`.
// Throws InvalidArgument for unknown keys or bad values.
EnvConfig apply_overrides(EnvConfig base, const json& overrides);

}  // namespace mlharness::env
