#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mlharness/agent/agent.hpp"
#include "mlharness/env/env.hpp"
#include "mlharness/env/service.hpp"
#include "mlharness/rank/rank.hpp"

namespace mlharness::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- fixture competitions ------------------------------------------------

struct FixtureSpec {
  std::string metric = "rmse";
  std::size_t n_train = 200;
  std::size_t n_test = 100;
  std::size_t public_size = 10;
  std::size_t private_size = 10;
  // Defaults to synthetic-<metric>-<seed>.
  std::string slug;
  std::vector<std::string> categories = {"Tabular"};
};

struct FixtureInfo {
  fs::path root;
  std::string slug;
  // Python program that writes the reference submission.
  std::string solution_code;
  // Score of that submission under the competition metric.
  double reference_score = 0.0;
};

// Writes <parent>/<slug>/ in the standard layout. The reference solution is
// kept at <root>/reference/solution.py, outside the public data. Throws
// MetricUnknown, IoError, InvalidArgument.
FixtureInfo generate_fixture_competition(const fs::path& parent, std::uint64_t seed,
                                         const FixtureSpec& spec = {});

// ---- run -----------------------------------------------------------------

struct EndpointSetting {
  agent::LlmEndpoint endpoint;
  // Canned responses; when set the endpoint is never contacted.
  std::optional<fs::path> script;
};

struct RunConfig {
  fs::path registry_root;
  // Empty selects every competition.
  std::vector<std::string> competitions;
  std::vector<std::string> categories;
  std::vector<EndpointSetting> endpoints;
  env::EnvConfig env;
  agent::AgentConfig agent;
  agent::PromptSet prompts = agent::PromptSet::defaults();
  std::size_t k = 2;
  std::size_t workers = 1;
  fs::path output_dir;

  // Key/value file with [run], [env], [agent], [prompts] and one
  // [endpoint:<name>] section per model. Relative paths resolve against the
  // file's directory. Throws IoError, Malformed, InvalidArgument.
  static RunConfig load(const fs::path& path);
  static RunConfig parse(const std::string& text, const fs::path& base_dir);
  // Throws InvalidArgument.
  void validate() const;
};

struct CellResult {
  std::string model;
  std::string task;
  Direction direction = Direction::HigherBetter;
  std::vector<std::string> categories;
  std::optional<double> score;
  std::optional<double> human_rank;
  std::size_t best_episode = 0;
  std::string error;
  std::vector<json> episodes;

  bool feasible() const { return score.has_value(); }
  json to_json() const;
  static CellResult from_json(const json& j);
};

struct RunSummary {
  std::vector<CellResult> cells;
  std::size_t executed = 0;
  std::size_t skipped = 0;
  rank::ScoreMatrix matrix;
  fs::path score_matrix_path;
};

// Layout under output_dir: trajectories/<model>/<task>/run_<i>.jsonl,
// usage/<model>/<task>/run_<i>.csv, cells/<model>/<task>.json, scores.csv.
// Cells whose result file exists are skipped. Throws InvalidArgument,
// LayoutError, IoError for configuration problems only.
RunSummary cmd_run(const RunConfig& config);

// Scores and categories from cell results, tasks sorted, models in the
// given order.
rank::ScoreMatrix assemble_matrix(const std::vector<CellResult>& cells,
                                  const std::vector<std::string>& models);

// ---- rank ----------------------------------------------------------------

struct RankOptions {
  rank::EloConfig elo;
  rank::AupOptions aup;
  double epsilon = rank::kDefaultEpsilon;
  double cap = rank::kDefaultCap;
};

struct LeaderboardRow {
  std::string model;
  double aup = 0.0;
  // Percent; absent when the matrix carries no HumanRank values.
  std::optional<double> h_rank;
  double elo = 0.0;
};

struct LeaderboardTable {
  std::string category;  // "Overall" for the unfiltered table
  std::vector<LeaderboardRow> rows;
};

// "<model> | %.3f | %.2f | %.0f"
std::string render_row(const LeaderboardRow& row);
std::string render_tables(const std::vector<LeaderboardTable>& tables);
json tables_to_json(const std::vector<LeaderboardTable>& tables);

// One table per category, then Overall; rows by Elo descending, ties by
// model name.
std::vector<LeaderboardTable> cmd_rank(const rank::ScoreMatrix& matrix, const RankOptions& options = {});
LeaderboardTable rank_table(const rank::ScoreMatrix& matrix, const RankOptions& options,
                            const std::string& category);

// CSV with columns category, model, aup, h_rank, elo. Throws Malformed.
std::vector<LeaderboardTable> read_precomputed_tables(const std::string& csv_text);

// ---- difficulty ----------------------------------------------------------

struct DifficultyRow {
  std::string task;
  double avg_human_rank = 0.0;
  std::string category;
};

// Accepts either a score matrix CSV (averaging human_rank over models,
// infeasible cells as 0) or a CSV with task, avg_human_rank[, category].
// Throws Malformed, InvalidArgument.
std::vector<DifficultyRow> cmd_difficulty(const std::string& csv_text);
std::string render_difficulty(const std::vector<DifficultyRow>& rows);

// ---- report --------------------------------------------------------------

struct ModelAnalytics {
  std::string model;
  std::size_t trajectories = 0;
  std::size_t tasks = 0;
  // Mean over tasks of the running best HumanRank per code step.
  std::vector<double> stepwise_best;
  std::size_t executes = 0;
  std::size_t validates = 0;
  double execution_ratio = 0.0;
  std::size_t validation_failures = 0;
  std::size_t execution_failures = 0;
  double validation_failure_rate = 0.0;
  double execution_failure_rate = 0.0;
  double overall_failure_rate = 0.0;
  // Failure bucket name -> count and share of all failures.
  std::map<std::string, std::size_t> error_counts;
  std::map<std::string, double> error_shares;
  double mean_history_chars = 0.0;
  double mean_history_tokens = 0.0;
  double mean_best_solution_chars = 0.0;
  double mean_best_solution_tokens = 0.0;
};

struct AnalyticsBundle {
  std::vector<ModelAnalytics> models;
  json to_json() const;
};

struct TrajectoryFile {
  std::string model;
  std::string task;
  std::vector<env::TrajectoryRecord> records;
};

// Per-trajectory building blocks, exposed for tests.
struct TrajectoryStats {
  std::vector<double> stepwise_best;
  std::size_t executes = 0;
  std::size_t validates = 0;
  std::size_t execution_failures = 0;
  std::size_t validation_failures = 0;
  std::map<std::string, std::size_t> error_counts;
  std::size_t history_chars = 0;
  std::size_t best_solution_chars = 0;
  std::optional<double> best;
};
TrajectoryStats trajectory_stats(const std::vector<env::TrajectoryRecord>& records);

AnalyticsBundle analyze(const std::vector<TrajectoryFile>& files);

// Finds *.jsonl below `dir`; the first path component names the model and
// the second the task when present. Throws MalformedTrajectory.
std::vector<TrajectoryFile> load_trajectory_dir(const fs::path& dir);
AnalyticsBundle cmd_report(const fs::path& trajectory_dir);
std::string render_report(const AnalyticsBundle& bundle);

// ---- validate ------------------------------------------------------------

// One line per violation, "<path>: <kind>: <detail> (<remedy>)".
std::string render_violations(const std::vector<registry::LayoutViolation>& violations);

// ---- serve ---------------------------------------------------------------

struct ServeConfig {
  env::ServiceConfig service;
  std::string host = "127.0.0.1";
  // 0 picks a free port.
  int port = 8000;
  double reap_interval_seconds = 30.0;
};

class StepServer {
 public:
  explicit StepServer(ServeConfig config);
  ~StepServer();
  StepServer(const StepServer&) = delete;
  StepServer& operator=(const StepServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  // Throws BindError.
  int start();
  // Stops accepting requests and closes every session.
  void stop();
  int port() const { return port_; }
  env::EnvService& service() { return *service_; }

 private:
  struct Impl;
  ServeConfig config_;
  std::unique_ptr<env::EnvService> service_;
  std::unique_ptr<Impl> impl_;
  std::thread listener_;
  std::thread reaper_;
  std::atomic<bool> running_{false};
  int port_ = 0;
};

// Serves until SIGINT or SIGTERM. Throws BindError.
void cmd_serve(const ServeConfig& config);

}  // namespace mlharness::cli
