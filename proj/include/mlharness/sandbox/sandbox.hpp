#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mlharness/registry/task_registry.hpp"

namespace mlharness::sandbox {

namespace fs = std::filesystem;

enum class ErrorClass {
  CompileError,
  RuntimeError,
  Timeout,
  MemoryExceeded,
  SubmissionNotCreated,
  SubmissionInvalid,
};
std::string to_string(ErrorClass c);
std::optional<ErrorClass> parse_error_class(const std::string& s);

// Reporting buckets; the first four classes collapse into ExecutionFailed.
enum class FailureBucket { ExecutionFailed, SubmissionNotCreated, SubmissionInvalid };
std::string to_string(FailureBucket b);
FailureBucket bucket_of(ErrorClass c);

enum class Isolation { Auto, Landlock, None };
std::string to_string(Isolation i);
std::optional<Isolation> parse_isolation(const std::string& s);

// True when the running kernel supports filesystem Landlock rules.
bool landlock_available();

inline constexpr double kDefaultTimeLimit = 300.0;
inline constexpr std::uint64_t kDefaultMemoryLimit = 4ULL << 30;
inline constexpr std::size_t kDefaultStreamCap = 64 * 1024;
inline constexpr double kGraceSeconds = 1.0;
inline constexpr const char* kSourcePlaceholder = "{source}";
inline constexpr const char* kDefaultRunCommand = "python3 {source}";
inline constexpr const char* kDefaultSyntaxCheck =
    "python3 -c \"import ast,sys; ast.parse(open(sys.argv[1]).read(), 'step.py')\" {source}";

struct SandboxConfig {
  fs::path workspace;
  fs::path public_mount;
  fs::path output_dir;
  fs::path code_dir;
  fs::path tmp_dir;
  // Private tree of the competition; used only to verify it stays unreachable.
  fs::path private_root;
  std::string run_command = kDefaultRunCommand;
  std::optional<std::string> syntax_check_command;
  double time_limit = kDefaultTimeLimit;
  std::uint64_t memory_limit = kDefaultMemoryLimit;
  std::size_t stream_cap = kDefaultStreamCap;
  bool allow_network = false;
  Isolation isolation = Isolation::Auto;
  // Extra host paths the program may read (interpreters outside /usr, etc.).
  std::vector<fs::path> extra_read_paths;

  // Throws InvalidArgument.
  void validate() const;
};

// Settings consumed by prepare_workspace; empty optionals fall back to the
// manifest, then to the defaults above.
struct SandboxSettings {
  fs::path base_dir;
  std::optional<std::string> run_command;
  std::optional<std::string> syntax_check_command;
  bool syntax_check = true;
  double time_limit = kDefaultTimeLimit;
  std::uint64_t memory_limit = kDefaultMemoryLimit;
  std::size_t stream_cap = kDefaultStreamCap;
  bool allow_network = false;
  Isolation isolation = Isolation::Auto;
  std::vector<fs::path> extra_read_paths;
};

enum class Status { Succeeded, Failed };
std::string to_string(Status s);

struct ExecutionOutcome {
  Status status = Status::Failed;
  std::optional<ErrorClass> error_class;
  std::optional<int> exit_code;
  std::string stdout_text;
  std::string stderr_text;
  double duration = 0.0;
  bool submission_found = false;

  bool operator==(const ExecutionOutcome&) const = default;
};

enum class Termination { Exited, Signaled, TimedOut, MemoryKilled, SyntaxFailed };

struct RawProcessResult {
  Termination termination = Termination::Exited;
  std::optional<int> exit_code;
  std::optional<int> signal;
  std::string stdout_text;
  std::string stderr_text;
  double duration = 0.0;
};

enum class SubmissionState { Missing, Present, Invalid };

ExecutionOutcome classify_outcome(const RawProcessResult& raw, SubmissionState submission,
                                  bool check_only);

// Same mapping applied to an already-classified outcome, e.g. once the
// submission has been checked against the answer schema.
ExecutionOutcome reclassify(const ExecutionOutcome& outcome, SubmissionState submission,
                            bool check_only);

// Throws IoError (missing public dir, existing workspace) or IsolationError.
SandboxConfig prepare_workspace(const registry::CompetitionManifest& manifest,
                                const std::string& session_id,
                                const SandboxSettings& settings = {});

// Writes `source` to code/step_<n> (n = one past the highest existing step)
// and runs it. Program failures are encoded in the outcome; IoError only for
// harness-side problems.
ExecutionOutcome run_program(const std::string& source, const SandboxConfig& config,
                             bool check_only);

std::optional<fs::path> collect_submission(const SandboxConfig& config);

// Removes the workspace tree.
void teardown(const SandboxConfig& config);

// Caps concurrently running programs process-wide; 0 removes the cap.
void set_max_concurrent_runs(std::size_t n);

// Replaces {source} in `templ`; the path is shell-quoted.
std::string render_command(const std::string& templ, const std::string& source_path);

}  // namespace mlharness::sandbox
