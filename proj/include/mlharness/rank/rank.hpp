#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlharness/common.hpp"
#include "mlharness/registry/task_registry.hpp"

namespace mlharness::rank {

using registry::LeaderboardSnapshot;

// Fraction of board entries the score strictly beats; ties count against it.
// Throws EmptyLeaderboard, InvalidArgument for a non-finite score.
double human_rank(double score, const LeaderboardSnapshot& board);

// Mean of human_rank over the boards that are present. Throws EmptyLeaderboard.
double combined_reward(double score, const std::optional<LeaderboardSnapshot>& public_board,
                       const std::optional<LeaderboardSnapshot>& private_board);

// Scores indexed [task][model]; nullopt marks an infeasible cell.
struct ScoreMatrix {
  std::vector<std::string> models;
  std::vector<std::string> tasks;
  std::vector<Direction> directions;
  std::vector<std::vector<std::optional<double>>> scores;
  // Optional per-cell combined HumanRank, same shape as `scores` when set.
  std::vector<std::vector<std::optional<double>>> human_ranks;
  std::vector<std::vector<std::string>> categories;

  // Throws InvalidArgument on shape problems.
  void validate() const;
  std::size_t model_index(const std::string& model) const;
  // Restricts to tasks carrying `category`; an empty category keeps all.
  ScoreMatrix filter_category(const std::string& category) const;
  std::vector<std::string> all_categories() const;

  bool operator==(const ScoreMatrix&) const = default;
};

// CSV columns task, model, score, direction, feasible, plus optional
// human_rank and category (';'-separated tags). Throws Malformed.
ScoreMatrix parse_score_matrix_csv(const std::string& text);
ScoreMatrix read_score_matrix_csv(const std::string& path);
std::string score_matrix_to_csv(const ScoreMatrix& m);

inline constexpr double kDefaultEpsilon = 1.0;
inline constexpr double kDefaultCap = 100.0;

struct RatioMatrix {
  std::vector<std::string> models;
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> ratios;  // [task][model]
  double epsilon = kDefaultEpsilon;
  double cap = kDefaultCap;
  std::vector<std::string> dropped_tasks;
  std::vector<std::string> warnings;
};

// Throws NonPositiveScore; AllInfeasibleTask when no task survives.
RatioMatrix performance_ratios(const ScoreMatrix& scores, double epsilon = kDefaultEpsilon,
                               double cap = kDefaultCap);

struct PerformanceProfile {
  std::string model;
  // (tau, rho) pairs: rho holds on [tau, next tau).
  std::vector<std::pair<double, double>> breakpoints;

  double at(double tau) const;
};

struct AupOptions {
  // Integrate from tau = 1 as written, instead of from 0.
  bool literal_lower_bound = false;
};

struct AupResult {
  std::vector<std::string> models;
  std::vector<double> values;
  double tau_max = 0.0;
  double epsilon = kDefaultEpsilon;
  double cap = kDefaultCap;
  bool literal_lower_bound = false;
};

struct AupReport {
  std::vector<PerformanceProfile> profiles;
  AupResult result;
};

AupReport aup(const RatioMatrix& ratios, const AupOptions& options = {});

enum class BattleOutcome { AWins, BWins, Tie };
std::string to_string(BattleOutcome o);

struct BattleRecord {
  std::string model_a;
  std::string model_b;
  BattleOutcome outcome = BattleOutcome::Tie;
  double weight = 1.0;
  std::string task;

  bool operator==(const BattleRecord&) const = default;
};

std::vector<BattleRecord> battles_from_scores(const ScoreMatrix& scores);

struct EloConfig {
  double base = 10.0;
  double scale = 400.0;
  double offset = 1000.0;
  double lambda = 1e-6;
  std::size_t bootstrap_rounds = 100;
  std::uint64_t seed = 0;
  double gradient_tolerance = 1e-10;
  std::size_t max_iterations = 200;

  // Throws InvalidArgument.
  void validate() const;
};

struct RatingResult {
  std::vector<std::string> models;
  std::vector<double> ratings;
  // Filled by bootstrap_ratings only.
  std::vector<double> median;
  std::vector<double> lo95;
  std::vector<double> hi95;

  bool operator==(const RatingResult&) const = default;
};

// Regularised weighted logistic loss of latent strengths `r` (one per model,
// in base-B log-odds units). Exposed for oracles and diagnostics.
double bradley_terry_loss(const std::vector<BattleRecord>& battles,
                          const std::vector<std::string>& models, const std::vector<double>& r,
                          const EloConfig& config);

// `models` fixes the rating order; empty means order of first appearance.
// Throws NotEnoughModels, NonConvergence, InvalidArgument.
RatingResult fit_bradley_terry(const std::vector<BattleRecord>& battles, const EloConfig& config,
                               std::vector<std::string> models = {});

RatingResult bootstrap_ratings(const std::vector<BattleRecord>& battles, const EloConfig& config,
                               std::vector<std::string> models = {});

// Linear interpolation between closest ranks; `q` in [0, 1].
double quantile(std::vector<double> values, double q);

std::string ratings_to_csv(const RatingResult& result);

// Descending by value, ties by task id. Throws InvalidArgument for values
// outside [0, 1].
std::vector<std::pair<std::string, double>> difficulty_ranking(
    const std::map<std::string, double>& avg_human_rank);

}  // namespace mlharness::rank
