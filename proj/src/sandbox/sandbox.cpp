#include "mlharness/sandbox/sandbox.hpp"

#include <sys/stat.h>
#include <unistd.h>

#include <array>
#include <cctype>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <mutex>

#include "mlharness/errors.hpp"
#include "process.hpp"

namespace mlharness::sandbox {

namespace {

constexpr std::array<const char*, 6> kErrorNames = {
    "CompileError", "RuntimeError", "Timeout", "MemoryExceeded", "SubmissionNotCreated",
    "SubmissionInvalid"};

const std::vector<fs::path> kSystemReadRoots = {"/usr", "/bin",  "/lib", "/lib64", "/sbin",
                                                "/etc", "/opt",  "/proc", "/sys"};
const std::vector<fs::path> kDeviceWriteRoots = {"/dev/null", "/dev/zero",    "/dev/random",
                                                 "/dev/urandom", "/dev/shm"};
const std::vector<std::string> kPassthroughEnv = {"PATH", "LANG", "LC_ALL", "LC_CTYPE",
                                                  "PYTHONPATH", "OMP_NUM_THREADS"};

class RunGate {
 public:
  void set_cap(std::size_t cap) {
    std::lock_guard lock(mutex_);
    cap_ = cap;
    cv_.notify_all();
  }
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return cap_ == 0 || running_ < cap_; });
    ++running_;
  }
  void release() {
    std::lock_guard lock(mutex_);
    --running_;
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t cap_ = 0;
  std::size_t running_ = 0;
};

RunGate& gate() {
  static RunGate g;
  return g;
}

struct GateHold {
  GateHold() { gate().acquire(); }
  ~GateHold() { gate().release(); }
  GateHold(const GateHold&) = delete;
  GateHold& operator=(const GateHold&) = delete;
};

bool is_beneath(const fs::path& child, const fs::path& parent) {
  const fs::path c = fs::weakly_canonical(child);
  const fs::path p = fs::weakly_canonical(parent);
  auto ci = c.begin();
  for (auto pi = p.begin(); pi != p.end(); ++pi, ++ci) {
    if (pi->empty()) continue;  // trailing separator
    if (ci == c.end() || *ci != *pi) return false;
  }
  return true;
}

bool valid_session_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (char ch : id) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) {
      return false;
    }
  }
  return true;
}

void make_writable(const fs::path& root) {
  std::error_code ec;
  if (!fs::exists(fs::symlink_status(root, ec))) return;
  if (fs::is_directory(fs::symlink_status(root, ec))) {
    fs::permissions(root, fs::perms::owner_all, fs::perm_options::add, ec);
    for (auto it = fs::recursive_directory_iterator(root, ec);
         !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (it->is_symlink(ec)) continue;
      fs::permissions(it->path(), fs::perms::owner_all, fs::perm_options::add, ec);
    }
  }
}

// Copies `from` into `to`; symlinks are materialised unless they lead into
// `private_root`, in which case they are dropped.
void copy_public(const fs::path& from, const fs::path& to, const fs::path& private_root) {
  fs::create_directories(to);
  std::vector<fs::directory_entry> entries;
  for (const auto& e : fs::directory_iterator(from)) entries.push_back(e);
  for (const auto& e : entries) {
    const fs::path target = to / e.path().filename();
    fs::path source = e.path();
    if (e.is_symlink()) {
      std::error_code ec;
      source = fs::canonical(e.path(), ec);
      if (ec || is_beneath(source, private_root)) continue;
    }
    if (fs::is_directory(source)) {
      copy_public(source, target, private_root);
    } else if (fs::is_regular_file(source)) {
      fs::copy_file(source, target, fs::copy_options::overwrite_existing);
    }
  }
}

void make_read_only(const fs::path& root) {
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      fs::permissions(e.path(), fs::perms::owner_read | fs::perms::group_read | fs::perms::others_read);
    }
  }
  std::vector<fs::path> dirs{root};
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  const auto rx = fs::perms::owner_read | fs::perms::owner_exec | fs::perms::group_read |
                  fs::perms::group_exec | fs::perms::others_read | fs::perms::others_exec;
  // Children before parents so traversal stays possible while changing modes.
  for (auto it = dirs.rbegin(); it != dirs.rend(); ++it) fs::permissions(*it, rx);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') {
      out += "'\\''";
    } else {
      out += ch;
    }
  }
  return out + "'";
}

// Host paths of the workspace are rewritten relative to it, so outputs do not
// depend on where the session happened to live.
void scrub_paths(std::string& text, const std::string& workspace) {
  if (workspace.empty()) return;
  std::size_t pos = 0;
  while ((pos = text.find(workspace, pos)) != std::string::npos) {
    text.replace(pos, workspace.size(), ".");
    pos += 1;
  }
}

RawProcessResult scrubbed(RawProcessResult raw, const SandboxConfig& config) {
  scrub_paths(raw.stdout_text, config.workspace.string());
  scrub_paths(raw.stderr_text, config.workspace.string());
  return raw;
}

std::size_t next_step_index(const fs::path& code_dir) {
  std::size_t highest = 0;
  std::error_code ec;
  for (fs::directory_iterator it(code_dir, ec), end; !ec && it != end; it.increment(ec)) {
    const std::string name = it->path().filename().string();
    if (!starts_with(name, "step_")) continue;
    if (const auto n = parse_int(name.substr(5)); n && *n > 0) {
      highest = std::max(highest, static_cast<std::size_t>(*n));
    }
  }
  return highest + 1;
}

std::vector<std::string> child_environment(const SandboxConfig& config) {
  std::vector<std::string> env;
  for (const auto& key : kPassthroughEnv) {
    if (const char* v = std::getenv(key.c_str())) env.push_back(key + "=" + v);
  }
  if (!std::getenv("PATH")) env.emplace_back("PATH=/usr/local/bin:/usr/bin:/bin");
  env.push_back("HOME=" + config.tmp_dir.string());
  env.push_back("TMPDIR=" + config.tmp_dir.string());
  env.push_back("MLH_INPUT_DIR=" + config.public_mount.string());
  env.push_back("MLH_OUTPUT_DIR=" + config.output_dir.string());
  env.emplace_back("PYTHONDONTWRITEBYTECODE=1");
  env.emplace_back("PYTHONUNBUFFERED=1");
  return env;
}

bool use_landlock(Isolation mode) {
  if (mode == Isolation::None) return false;
  if (mode == Isolation::Landlock) return true;
  static const bool available = [] {
    const bool ok = landlock_available();
    if (!ok) std::fprintf(stderr, "mlharness: Landlock unavailable, running programs unconfined\n");
    return ok;
  }();
  return available;
}

class Ruleset {
 public:
  explicit Ruleset(const SandboxConfig& config) {
    if (!use_landlock(config.isolation)) return;
    std::vector<fs::path> read = kSystemReadRoots;
    read.insert(read.end(), config.extra_read_paths.begin(), config.extra_read_paths.end());
    read.push_back(config.workspace);
    std::vector<fs::path> write = kDeviceWriteRoots;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(config.workspace, ec)) {
      if (e.path() != config.public_mount) write.push_back(e.path());
    }
    fd_ = detail::build_ruleset(read, write, !config.allow_network);
  }
  ~Ruleset() {
    if (fd_ >= 0) ::close(fd_);
  }
  Ruleset(const Ruleset&) = delete;
  Ruleset& operator=(const Ruleset&) = delete;
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

}  // namespace

std::string to_string(ErrorClass c) { return kErrorNames[static_cast<std::size_t>(c)]; }

std::optional<ErrorClass> parse_error_class(const std::string& s) {
  for (std::size_t i = 0; i < kErrorNames.size(); ++i) {
    if (s == kErrorNames[i]) return static_cast<ErrorClass>(i);
  }
  return std::nullopt;
}

std::string to_string(FailureBucket b) {
  switch (b) {
    case FailureBucket::ExecutionFailed: return "Execution Failed";
    case FailureBucket::SubmissionNotCreated: return "Submission Not Created";
    case FailureBucket::SubmissionInvalid: return "Submission Invalid";
  }
  return "";
}

FailureBucket bucket_of(ErrorClass c) {
  switch (c) {
    case ErrorClass::SubmissionNotCreated: return FailureBucket::SubmissionNotCreated;
    case ErrorClass::SubmissionInvalid: return FailureBucket::SubmissionInvalid;
    default: return FailureBucket::ExecutionFailed;
  }
}

std::string to_string(Isolation i) {
  switch (i) {
    case Isolation::Auto: return "auto";
    case Isolation::Landlock: return "landlock";
    case Isolation::None: return "none";
  }
  return "";
}

std::optional<Isolation> parse_isolation(const std::string& s) {
  if (s == "auto") return Isolation::Auto;
  if (s == "landlock") return Isolation::Landlock;
  if (s == "none") return Isolation::None;
  return std::nullopt;
}

bool landlock_available() { return detail::landlock_abi() >= 1; }

std::string to_string(Status s) { return s == Status::Succeeded ? "Succeeded" : "Failed"; }

void SandboxConfig::validate() const {
  if (!(time_limit > 0.0)) throw InvalidArgument("time_limit must be positive");
  if (memory_limit == 0) throw InvalidArgument("memory_limit must be positive");
  if (run_command.find(kSourcePlaceholder) == std::string::npos) {
    throw InvalidArgument("run_command must contain {source}");
  }
  if (syntax_check_command && syntax_check_command->find(kSourcePlaceholder) == std::string::npos) {
    throw InvalidArgument("syntax_check_command must contain {source}");
  }
  if (!private_root.empty() && !public_mount.empty() && is_beneath(private_root, public_mount)) {
    throw IsolationError("public mount contains the private tree");
  }
}

ExecutionOutcome classify_outcome(const RawProcessResult& raw, SubmissionState submission,
                                  bool check_only) {
  ExecutionOutcome o;
  o.exit_code = raw.exit_code;
  o.stdout_text = raw.stdout_text;
  o.stderr_text = raw.stderr_text;
  o.duration = raw.duration;
  o.submission_found = submission != SubmissionState::Missing;

  const auto fail = [&](ErrorClass c) {
    o.status = Status::Failed;
    o.error_class = c;
    return o;
  };
  switch (raw.termination) {
    case Termination::SyntaxFailed: return fail(ErrorClass::CompileError);
    case Termination::TimedOut: return fail(ErrorClass::Timeout);
    case Termination::MemoryKilled: return fail(ErrorClass::MemoryExceeded);
    case Termination::Signaled: return fail(ErrorClass::RuntimeError);
    case Termination::Exited: break;
  }
  if (raw.exit_code.value_or(-1) != 0) return fail(ErrorClass::RuntimeError);
  if (!check_only && submission == SubmissionState::Missing) {
    return fail(ErrorClass::SubmissionNotCreated);
  }
  if (submission == SubmissionState::Invalid) return fail(ErrorClass::SubmissionInvalid);
  o.status = Status::Succeeded;
  o.error_class.reset();
  o.exit_code = 0;
  return o;
}

ExecutionOutcome reclassify(const ExecutionOutcome& outcome, SubmissionState submission,
                            bool check_only) {
  RawProcessResult raw;
  raw.exit_code = outcome.exit_code;
  raw.stdout_text = outcome.stdout_text;
  raw.stderr_text = outcome.stderr_text;
  raw.duration = outcome.duration;
  if (outcome.error_class) {
    switch (*outcome.error_class) {
      case ErrorClass::CompileError: raw.termination = Termination::SyntaxFailed; break;
      case ErrorClass::Timeout: raw.termination = Termination::TimedOut; break;
      case ErrorClass::MemoryExceeded: raw.termination = Termination::MemoryKilled; break;
      case ErrorClass::RuntimeError:
        if (!raw.exit_code) raw.termination = Termination::Signaled;
        break;
      default: break;
    }
  }
  return classify_outcome(raw, submission, check_only);
}

SandboxConfig prepare_workspace(const registry::CompetitionManifest& manifest,
                                const std::string& session_id, const SandboxSettings& settings) {
  if (!valid_session_id(session_id)) {
    throw InvalidArgument("session id '" + session_id + "' is not a plain file name");
  }
  const fs::path public_dir = manifest.public_dir();
  if (!fs::is_directory(public_dir)) {
    throw IoError("public data directory '" + public_dir.string() + "' is missing");
  }
  const fs::path base =
      settings.base_dir.empty() ? fs::temp_directory_path() / "mlharness" : settings.base_dir;

  SandboxConfig c;
  c.workspace = fs::absolute(base / session_id);
  c.public_mount = c.workspace / "input";
  c.output_dir = c.workspace / "output";
  c.code_dir = c.workspace / "code";
  c.tmp_dir = c.workspace / "tmp";
  c.private_root = fs::absolute(manifest.private_dir());
  c.run_command = settings.run_command.value_or(manifest.run_command.value_or(kDefaultRunCommand));
  if (settings.syntax_check) {
    c.syntax_check_command = settings.syntax_check_command.value_or(
        manifest.syntax_check_command.value_or(kDefaultSyntaxCheck));
  }
  c.time_limit = settings.time_limit;
  c.memory_limit = settings.memory_limit;
  c.stream_cap = settings.stream_cap;
  c.allow_network = settings.allow_network;
  c.isolation = settings.isolation;
  c.extra_read_paths = settings.extra_read_paths;
  c.validate();

  if (is_beneath(c.workspace, manifest.root) || is_beneath(manifest.root, c.workspace)) {
    throw IsolationError("workspace and competition tree must not overlap");
  }
  if (use_landlock(c.isolation)) {
    std::vector<fs::path> reachable = kSystemReadRoots;
    reachable.insert(reachable.end(), c.extra_read_paths.begin(), c.extra_read_paths.end());
    for (const auto& root : reachable) {
      if (is_beneath(c.private_root, root)) {
        throw IsolationError("private tree '" + c.private_root.string() +
                             "' lies under the readable root '" + root.string() + "'");
      }
    }
  }

  std::error_code ec;
  if (fs::exists(c.workspace, ec)) {
    throw IoError("workspace '" + c.workspace.string() + "' already exists");
  }
  try {
    fs::create_directories(c.workspace);
    copy_public(public_dir, c.public_mount, c.private_root);
    make_read_only(c.public_mount);
    for (const auto& d : {c.output_dir, c.code_dir, c.tmp_dir}) fs::create_directories(d);
  } catch (const fs::filesystem_error& e) {
    make_writable(c.workspace);
    fs::remove_all(c.workspace, ec);
    throw IoError(std::string("cannot prepare workspace: ") + e.what());
  }
  return c;
}

std::string render_command(const std::string& templ, const std::string& source_path) {
  std::string out;
  const std::string quoted = shell_quote(source_path);
  const std::string placeholder = kSourcePlaceholder;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t hit = templ.find(placeholder, pos);
    if (hit == std::string::npos) break;
    out.append(templ, pos, hit - pos);
    out += quoted;
    pos = hit + placeholder.size();
  }
  out.append(templ, pos, std::string::npos);
  return out;
}

ExecutionOutcome run_program(const std::string& source, const SandboxConfig& config,
                             bool check_only) {
  config.validate();
  const std::size_t step = next_step_index(config.code_dir);
  const std::string rel = "code/step_" + std::to_string(step);
  write_file((config.workspace / rel).string(), source);

  std::error_code ec;
  fs::remove(config.output_dir / "submission.csv", ec);

  GateHold hold;
  const Ruleset ruleset(config);
  detail::ProcessSpec spec;
  spec.cwd = config.workspace;
  spec.env = child_environment(config);
  spec.deadline = detail::Clock::now() +
                  std::chrono::duration_cast<detail::Clock::duration>(
                      std::chrono::duration<double>(config.time_limit));
  spec.memory_limit = config.memory_limit;
  spec.stream_cap = config.stream_cap;
  spec.ruleset_fd = ruleset.fd();
  spec.isolate_network = !config.allow_network;

  double spent = 0.0;
  if (config.syntax_check_command) {
    spec.command = render_command(*config.syntax_check_command, rel);
    RawProcessResult check = scrubbed(detail::run_process(spec), config);
    spent = check.duration;
    if (check.termination != Termination::Exited || check.exit_code.value_or(1) != 0) {
      if (check.termination == Termination::Exited || check.termination == Termination::Signaled) {
        check.termination = Termination::SyntaxFailed;
      }
      return classify_outcome(check, SubmissionState::Missing, check_only);
    }
  }

  spec.command = render_command(config.run_command, rel);
  RawProcessResult raw = scrubbed(detail::run_process(spec), config);
  raw.duration += spent;
  const SubmissionState state =
      collect_submission(config) ? SubmissionState::Present : SubmissionState::Missing;
  return classify_outcome(raw, state, check_only);
}

std::optional<fs::path> collect_submission(const SandboxConfig& config) {
  const fs::path p = config.output_dir / "submission.csv";
  std::error_code ec;
  const auto st = fs::status(p, ec);
  if (ec && ec != std::errc::no_such_file_or_directory) {
    throw IoError("cannot stat '" + p.string() + "': " + ec.message());
  }
  if (!fs::is_regular_file(st)) return std::nullopt;
  const auto size = fs::file_size(p, ec);
  if (ec) throw IoError("cannot stat '" + p.string() + "': " + ec.message());
  if (size == 0) return std::nullopt;
  return p;
}

void teardown(const SandboxConfig& config) {
  if (config.workspace.empty()) return;
  make_writable(config.workspace);
  std::error_code ec;
  fs::remove_all(config.workspace, ec);
  if (ec) throw IoError("cannot remove workspace '" + config.workspace.string() + "': " + ec.message());
}

void set_max_concurrent_runs(std::size_t n) { gate().set_cap(n); }

}  // namespace mlharness::sandbox
