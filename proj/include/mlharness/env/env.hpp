#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mlharness/metrics/metric_registry.hpp"
#include "mlharness/registry/task_registry.hpp"
#include "mlharness/sandbox/sandbox.hpp"

namespace mlharness::env {

using json = nlohmann::json;

enum class ActionKind { RequestInfo, ValidateCode, ExecuteCode, GetHistory, Reset, Custom };

inline constexpr std::array<const char*, 5> kNativeActions = {
    "request_info", "validate_code", "execute_code", "get_history", "reset"};

bool is_native_action(const std::string& name);

struct Action {
  ActionKind kind = ActionKind::RequestInfo;
  // Set for Custom only.
  std::string custom_name;
  json args = json::object();

  static Action request_info();
  static Action validate_code(std::string code);
  static Action execute_code(std::string code);
  static Action get_history(std::optional<std::int64_t> last_n = std::nullopt);
  static Action reset();
  static Action custom(std::string name, json args = json::object());
  // Native names map to their kind, anything else to Custom.
  static Action from_wire(const std::string& action_type, json args);
  static Action from_json(const json& j);

  std::string name() const;
  json to_json() const;

  bool operator==(const Action& other) const;
};

struct TrajectoryRecord {
  std::size_t step_index = 0;
  std::string timestamp;
  json action;
  json observation;
  std::optional<double> reward;
  std::optional<double> best_score_so_far;
  double duration = 0.0;

  json to_json() const;
  // Throws MalformedTrajectory.
  static TrajectoryRecord from_json(const json& j);
};

struct InfoBundle {
  std::string description;
  std::string sample_submission;
  std::string data_dir;
  std::string output_dir;
  std::string data_structure;

  bool operator==(const InfoBundle&) const = default;
};

struct ExecutionFeedback {
  bool check_only = false;
  sandbox::ExecutionOutcome outcome;
  std::optional<metrics::FormatReport> format_report;
  std::optional<metrics::EvalResult> eval;
  std::optional<double> human_rank;
  // Echoed so rendered feedback can name the limit that was hit.
  double time_limit = 0.0;
  std::uint64_t memory_limit = 0;
};

struct HistorySlice {
  std::vector<TrajectoryRecord> records;
};

struct ResetAck {
  std::size_t max_steps = 0;
};

struct CustomPayload {
  std::string action;
  json data;
};

// A step whose handler failed; the error is reported, not raised.
struct ActionError {
  std::string action;
  std::string code;
  std::string message;
};

using Payload =
    std::variant<InfoBundle, ExecutionFeedback, HistorySlice, ResetAck, CustomPayload, ActionError>;

struct Observation {
  Payload payload;
  std::string feedback_text;

  std::string kind() const;
  std::optional<sandbox::ErrorClass> error_class() const;
  json to_json() const;
};

std::string build_feedback(const Payload& payload);

struct EnvConfig {
  std::size_t max_steps = 15;
  sandbox::SandboxSettings sandbox;
  bool unlimited_submissions = true;
  // Consulted only when unlimited_submissions is false.
  std::size_t max_submissions = 1;
  // Append-only JSONL record of the session; empty disables persistence.
  std::filesystem::path trajectory_path;
  std::size_t sample_submission_lines = 10;
  std::size_t tree_depth = 3;
  std::size_t tree_entries = 20;

  // Throws InvalidArgument.
  void validate() const;
};

struct StepResult {
  Observation observation;
  std::optional<double> reward;
  bool done = false;
};

struct ActionInfo {
  std::string name;
  std::string description;
  // Human-readable argument schema, e.g. "code: program text".
  std::string arguments;
};

class EnvSession;

// Receives the session (read-only) and the step arguments; returns the
// observation payload. Exceptions become ActionError observations.
using ActionHandler = std::function<json(const EnvSession&, const json& args)>;

class EnvSession {
 public:
  // create_env. Throws InvalidArgument, IoError, LayoutError.
  EnvSession(registry::CompetitionManifest manifest, EnvConfig config, std::string session_id = "");
  ~EnvSession();
  EnvSession(const EnvSession&) = delete;
  EnvSession& operator=(const EnvSession&) = delete;

  // Throws BudgetExhausted, UnknownAction (a Custom action with an empty
  // name), ConcurrentStep.
  StepResult step(const Action& action);

  // Also reachable as step(Action::reset()); allowed after the budget is spent.
  Observation reset();

  void register_action(const std::string& name, ActionHandler handler,
                       std::string description = "", std::string arguments = "");
  std::vector<ActionInfo> action_catalog() const;

  InfoBundle request_info() const;
  HistorySlice history(std::size_t last_n) const;

  const std::string& id() const { return id_; }
  const registry::CompetitionManifest& manifest() const { return manifest_; }
  const EnvConfig& config() const { return config_; }
  const sandbox::SandboxConfig& sandbox_config() const { return sandbox_; }
  std::size_t step_count() const;
  std::size_t max_steps() const { return config_.max_steps; }
  bool done() const;
  std::optional<double> best_raw_score() const;
  std::optional<double> best_human_rank() const;
  std::vector<TrajectoryRecord> trajectory() const;
  // Every record since creation, reset markers (step_index 0) included.
  std::vector<TrajectoryRecord> archive() const;

  // Persists pending records and removes the workspace; idempotent.
  void close();

 private:
  Payload dispatch(const Action& action, std::optional<double>& reward);
  ExecutionFeedback run_code(const std::string& code, bool check_only,
                             std::optional<double>& reward);
  void append(TrajectoryRecord record);
  void prepare();

  registry::CompetitionManifest manifest_;
  EnvConfig config_;
  std::string id_;
  sandbox::SandboxConfig sandbox_;
  std::optional<metrics::SubmissionTable> answers_;
  std::map<std::string, std::pair<ActionHandler, ActionInfo>> custom_;

  mutable std::mutex state_mutex_;
  std::mutex step_mutex_;
  std::size_t step_count_ = 0;
  std::size_t submissions_ = 0;
  std::optional<double> best_raw_;
  std::optional<double> best_rank_;
  std::vector<TrajectoryRecord> trajectory_;
  std::vector<TrajectoryRecord> archive_;
  std::ofstream log_;
  bool closed_ = false;
};

// Unique within the process: <slug>-<pid>-<counter>.
std::string new_session_id(const std::string& slug);

std::unique_ptr<EnvSession> create_env(const registry::CompetitionManifest& manifest,
                                       const EnvConfig& config = {},
                                       const std::string& session_id = "");

// Strips timestamp and duration fields so two runs can be compared.
json comparable(const TrajectoryRecord& record);

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path);

}  // namespace mlharness::env
