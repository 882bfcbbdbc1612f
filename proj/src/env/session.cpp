#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <sstream>

#include "mlharness/env/env.hpp"
#include "mlharness/errors.hpp"
#include "mlharness/rank/rank.hpp"

namespace mlharness::env {

namespace {

const std::array<ActionInfo, 5> kNativeCatalog = {{
    {"request_info", "Return the task description, a sample submission excerpt, the data and "
                     "output directories, and the data layout.",
     "none"},
    {"validate_code", "Run a program for syntax and runtime checks only; nothing is scored. Use "
                      "it to debug or to print information about the data.",
     "code: complete program text"},
    {"execute_code", "Run a program as a full submission: it must write submission.csv to the "
                     "output directory, which is then validated and scored.",
     "code: complete program text"},
    {"get_history", "Return the most recent environment records.",
     "last_n: optional positive integer"},
    {"reset", "Wipe the workspace and restart the session with a fresh step budget.", "none"},
}};

std::atomic<std::uint64_t> g_session_counter{0};

}  // namespace

std::string new_session_id(const std::string& slug) {
  std::string clean;
  for (char ch : slug) {
    clean += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
  }
  if (clean.empty()) clean = "session";
  return clean + "-" + std::to_string(::getpid()) + "-" + std::to_string(++g_session_counter);
}

namespace {

std::string first_lines(const std::string& text, std::size_t n) {
  std::string out;
  std::size_t lines = 0;
  for (char ch : text) {
    if (lines >= n) break;
    out += ch;
    if (ch == '\n') ++lines;
  }
  return out;
}

std::optional<std::int64_t> integer_arg(const json& args, const char* key) {
  if (!args.is_object() || !args.contains(key)) return std::nullopt;
  const json& v = args[key];
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_string()) return parse_int(v.get<std::string>());
  throw InvalidArgument(std::string(key) + " must be an integer");
}

std::string code_arg(const json& args) {
  if (!args.is_object() || !args.contains("code") || !args["code"].is_string()) {
    throw InvalidArgument("args.code must be program text");
  }
  std::string code = args["code"].get<std::string>();
  if (trim(code).empty()) throw InvalidArgument("args.code is empty");
  return code;
}

}  // namespace

bool is_native_action(const std::string& name) {
  return std::find_if(kNativeActions.begin(), kNativeActions.end(),
                      [&](const char* n) { return name == n; }) != kNativeActions.end();
}

Action Action::request_info() { return {ActionKind::RequestInfo, "", json::object()}; }
Action Action::validate_code(std::string code) {
  return {ActionKind::ValidateCode, "", {{"code", std::move(code)}}};
}
Action Action::execute_code(std::string code) {
  return {ActionKind::ExecuteCode, "", {{"code", std::move(code)}}};
}
Action Action::get_history(std::optional<std::int64_t> last_n) {
  Action a{ActionKind::GetHistory, "", json::object()};
  if (last_n) a.args["last_n"] = *last_n;
  return a;
}
Action Action::reset() { return {ActionKind::Reset, "", json::object()}; }
Action Action::custom(std::string name, json args) {
  return {ActionKind::Custom, std::move(name), args.is_null() ? json::object() : std::move(args)};
}

Action Action::from_wire(const std::string& action_type, json args) {
  if (args.is_null()) args = json::object();
  for (std::size_t i = 0; i < kNativeActions.size(); ++i) {
    if (action_type == kNativeActions[i]) return {static_cast<ActionKind>(i), "", std::move(args)};
  }
  return custom(action_type, std::move(args));
}

Action Action::from_json(const json& j) {
  if (!j.is_object() || !j.contains("action_type") || !j["action_type"].is_string()) {
    throw InvalidArgument("action needs a string action_type");
  }
  return from_wire(j["action_type"].get<std::string>(), j.value("args", json::object()));
}

std::string Action::name() const {
  if (kind == ActionKind::Custom) return custom_name;
  return kNativeActions[static_cast<std::size_t>(kind)];
}

json Action::to_json() const { return {{"action_type", name()}, {"args", args}}; }

bool Action::operator==(const Action& other) const {
  return kind == other.kind && custom_name == other.custom_name && args == other.args;
}

void EnvConfig::validate() const {
  if (max_steps < 1) throw InvalidArgument("max_steps must be at least 1");
  if (!unlimited_submissions && max_submissions < 1) {
    throw InvalidArgument("max_submissions must be at least 1");
  }
  if (!(sandbox.time_limit > 0.0)) throw InvalidArgument("time_limit must be positive");
  if (sandbox.memory_limit == 0) throw InvalidArgument("memory_limit must be positive");
}

EnvSession::EnvSession(registry::CompetitionManifest manifest, EnvConfig config,
                       std::string session_id)
    : manifest_(std::move(manifest)), config_(std::move(config)), id_(std::move(session_id)) {
  config_.validate();
  if (manifest_.submission_columns.empty()) {
    throw registry::LayoutError({{registry::layout::kSampleSubmission, registry::ViolationKind::Malformed,
                        "manifest carries no submission columns"}});
  }
  if (id_.empty()) id_ = new_session_id(manifest_.slug);
  if (!config_.trajectory_path.empty()) {
    std::filesystem::create_directories(config_.trajectory_path.parent_path());
    log_.open(config_.trajectory_path, std::ios::app);
    if (!log_) throw IoError("cannot open trajectory file '" + config_.trajectory_path.string() + "'");
  }
  prepare();
}

EnvSession::~EnvSession() {
  try {
    close();
  } catch (...) {
  }
}

void EnvSession::prepare() { sandbox_ = sandbox::prepare_workspace(manifest_, id_, config_.sandbox); }

void EnvSession::close() {
  std::lock_guard lock(state_mutex_);
  if (closed_) return;
  closed_ = true;
  if (log_.is_open()) log_.close();
  sandbox::teardown(sandbox_);
}

std::size_t EnvSession::step_count() const {
  std::lock_guard lock(state_mutex_);
  return step_count_;
}

bool EnvSession::done() const { return step_count() >= config_.max_steps; }

std::optional<double> EnvSession::best_raw_score() const {
  std::lock_guard lock(state_mutex_);
  return best_raw_;
}

std::optional<double> EnvSession::best_human_rank() const {
  std::lock_guard lock(state_mutex_);
  return best_rank_;
}

std::vector<TrajectoryRecord> EnvSession::trajectory() const {
  std::lock_guard lock(state_mutex_);
  return trajectory_;
}

std::vector<TrajectoryRecord> EnvSession::archive() const {
  std::lock_guard lock(state_mutex_);
  return archive_;
}

void EnvSession::register_action(const std::string& name, ActionHandler handler,
                                 std::string description, std::string arguments) {
  if (is_native_action(name)) throw ReservedName("'" + name + "' is a native action");
  if (name.empty()) throw InvalidArgument("action name is empty");
  if (!handler) throw InvalidArgument("action handler is empty");
  std::lock_guard lock(state_mutex_);
  if (custom_.count(name)) throw DuplicateName("action '" + name + "' is already registered");
  if (description.empty()) description = "User-defined action.";
  if (arguments.empty()) arguments = "free-form JSON object";
  custom_.emplace(name, std::pair{std::move(handler), ActionInfo{name, description, arguments}});
}

std::vector<ActionInfo> EnvSession::action_catalog() const {
  std::vector<ActionInfo> out(kNativeCatalog.begin(), kNativeCatalog.end());
  std::lock_guard lock(state_mutex_);
  for (const auto& [name, entry] : custom_) out.push_back(entry.second);
  return out;
}

InfoBundle EnvSession::request_info() const {
  InfoBundle b;
  b.description = manifest_.description;
  b.sample_submission =
      first_lines(read_file(manifest_.sample_submission_path().string()), config_.sample_submission_lines);
  b.data_dir = "./input";
  b.output_dir = "./output";
  // Listing the workspace copy keeps host paths out of the observation.
  b.data_structure =
      registry::data_structure_summary(sandbox_.public_mount, config_.tree_depth, config_.tree_entries);
  return b;
}

HistorySlice EnvSession::history(std::size_t last_n) const {
  std::lock_guard lock(state_mutex_);
  HistorySlice h;
  const std::size_t n = std::min(last_n, trajectory_.size());
  h.records.assign(trajectory_.end() - static_cast<std::ptrdiff_t>(n), trajectory_.end());
  return h;
}

void EnvSession::append(TrajectoryRecord record) {
  // Caller holds state_mutex_.
  if (log_.is_open()) {
    log_ << record.to_json().dump() << '\n';
    log_.flush();
  }
  archive_.push_back(record);
  if (record.step_index > 0) trajectory_.push_back(std::move(record));
}

ExecutionFeedback EnvSession::run_code(const std::string& code, bool check_only,
                                       std::optional<double>& reward) {
  ExecutionFeedback f;
  f.check_only = check_only;
  f.time_limit = sandbox_.time_limit;
  f.memory_limit = sandbox_.memory_limit;
  f.outcome = sandbox::run_program(code, sandbox_, check_only);
  if (check_only || f.outcome.status != sandbox::Status::Succeeded) return f;

  const auto path = sandbox::collect_submission(sandbox_);
  metrics::FormatReport report;
  std::optional<metrics::SubmissionTable> table;
  try {
    std::size_t ragged = 0;
    table = metrics::SubmissionTable::load(path->string(), manifest_.id_column(), &ragged);
    if (ragged > 0) {
      report.add(metrics::ProblemCode::ExtraColumn,
                 std::to_string(ragged) + " row(s) have more cells than the header");
    }
  } catch (const HarnessError& e) {
    report.add(metrics::ProblemCode::MissingColumn,
               std::string("submission.csv could not be parsed: ") + e.what());
  }
  if (!answers_) {
    answers_ = metrics::SubmissionTable::load(manifest_.answer_path().string(), manifest_.id_column());
  }
  if (table && report.valid) report = metrics::validate_submission(*table, *answers_, manifest_.metric);
  if (report.valid) {
    try {
      f.eval = metrics::evaluate(manifest_.metric, *table, *answers_);
    } catch (const HarnessError& e) {
      report.add(metrics::ProblemCode::OutOfRange, std::string("submission cannot be scored: ") + e.what());
    }
  }
  f.format_report = report;
  if (!report.valid) {
    f.outcome = sandbox::reclassify(f.outcome, sandbox::SubmissionState::Invalid, false);
    f.eval.reset();
    return f;
  }
  f.human_rank =
      rank::combined_reward(f.eval->raw_score, manifest_.public_leaderboard, manifest_.private_leaderboard);
  reward = f.human_rank;
  return f;
}

Payload EnvSession::dispatch(const Action& action, std::optional<double>& reward) {
  const std::string name = action.name();
  try {
    switch (action.kind) {
      case ActionKind::RequestInfo: return request_info();
      case ActionKind::ValidateCode: return run_code(code_arg(action.args), true, reward);
      case ActionKind::ExecuteCode: {
        const std::string code = code_arg(action.args);
        if (!config_.unlimited_submissions && submissions_ >= config_.max_submissions) {
          return ActionError{name, "SubmissionLimit",
                             "the session allows " + std::to_string(config_.max_submissions) +
                                 " submission(s)"};
        }
        ++submissions_;
        return run_code(code, false, reward);
      }
      case ActionKind::GetHistory: {
        const auto n = integer_arg(action.args, "last_n");
        if (n && *n < 1) throw InvalidArgument("last_n must be at least 1");
        return history(n ? static_cast<std::size_t>(*n) : config_.max_steps);
      }
      case ActionKind::Reset: break;
      case ActionKind::Custom: {
        std::optional<ActionHandler> handler;
        {
          std::lock_guard lock(state_mutex_);
          const auto it = custom_.find(name);
          if (it != custom_.end()) handler = it->second.first;
        }
        if (!handler) return ActionError{name, "UnknownAction", "no action named '" + name + "'"};
        return CustomPayload{name, (*handler)(*this, action.args)};
      }
    }
  } catch (const HarnessError& e) {
    reward.reset();
    return ActionError{name, e.code(), e.what()};
  } catch (const std::exception& e) {
    reward.reset();
    return ActionError{name, "HandlerError", e.what()};
  }
  return ActionError{name, "UnknownAction", "unsupported action"};
}

StepResult EnvSession::step(const Action& action) {
  std::unique_lock step_lock(step_mutex_, std::try_to_lock);
  if (!step_lock.owns_lock()) throw ConcurrentStep("session '" + id_ + "' already has a step in flight");
  if (closed_) throw InvalidArgument("session '" + id_ + "' is closed");
  if (action.kind == ActionKind::Reset) {
    step_lock.unlock();
    return {reset(), std::nullopt, false};
  }
  if (done()) {
    throw BudgetExhausted("session '" + id_ + "' used all " + std::to_string(config_.max_steps) +
                          " steps");
  }
  if (action.kind == ActionKind::Custom && action.custom_name.empty()) {
    throw UnknownAction("custom action without a name");
  }

  const auto start = std::chrono::steady_clock::now();
  std::optional<double> reward;
  Observation obs{dispatch(action, reward), ""};
  obs.feedback_text = build_feedback(obs.payload);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::lock_guard lock(state_mutex_);
  ++step_count_;
  if (const auto* f = std::get_if<ExecutionFeedback>(&obs.payload); f && f->eval) {
    const double raw = f->eval->raw_score;
    if (!best_raw_ || strictly_better(raw, *best_raw_, f->eval->direction)) best_raw_ = raw;
  }
  if (reward && (!best_rank_ || *reward > *best_rank_)) best_rank_ = reward;

  TrajectoryRecord record;
  record.step_index = step_count_;
  record.timestamp = utc_timestamp_now();
  record.action = action.to_json();
  record.observation = obs.to_json();
  record.reward = reward;
  record.best_score_so_far = best_rank_;
  record.duration = elapsed;
  append(std::move(record));
  return {std::move(obs), reward, step_count_ >= config_.max_steps};
}

Observation EnvSession::reset() {
  std::unique_lock step_lock(step_mutex_, std::try_to_lock);
  if (!step_lock.owns_lock()) throw ConcurrentStep("session '" + id_ + "' already has a step in flight");
  if (closed_) throw InvalidArgument("session '" + id_ + "' is closed");

  const auto start = std::chrono::steady_clock::now();
  sandbox::teardown(sandbox_);
  prepare();
  Observation obs{ResetAck{config_.max_steps}, ""};
  obs.feedback_text = build_feedback(obs.payload);

  std::lock_guard lock(state_mutex_);
  step_count_ = 0;
  submissions_ = 0;
  best_raw_.reset();
  best_rank_.reset();
  trajectory_.clear();
  TrajectoryRecord marker;
  marker.step_index = 0;
  marker.timestamp = utc_timestamp_now();
  marker.action = Action::reset().to_json();
  marker.observation = obs.to_json();
  marker.duration = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  append(std::move(marker));
  return obs;
}

std::unique_ptr<EnvSession> create_env(const registry::CompetitionManifest& manifest,
                                       const EnvConfig& config, const std::string& session_id) {
  return std::make_unique<EnvSession>(manifest, config, session_id);
}

}  // namespace mlharness::env
