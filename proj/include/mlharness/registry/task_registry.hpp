#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"
#include "mlharness/metrics/metric_registry.hpp"

namespace mlharness::registry {

namespace fs = std::filesystem;

// Paths of the standard competition layout, relative to the competition root.
namespace layout {
inline constexpr const char* kManifest = "manifest";
inline constexpr const char* kPublicDir = "data/public";
inline constexpr const char* kPrivateDir = "data/private";
inline constexpr const char* kDescription = "data/public/description.txt";
inline constexpr const char* kSampleSubmission = "data/public/sample_submission.csv";
inline constexpr const char* kDataStructure = "data/public/data_structure.txt";
inline constexpr const char* kAnswers = "data/private/test_answer.csv";
inline constexpr const char* kPublicLeaderboard = "data/private/public_leaderboard.csv";
inline constexpr const char* kPrivateLeaderboard = "data/private/private_leaderboard.csv";
inline constexpr const char* kAnyLeaderboard = "data/private/{public,private}_leaderboard.csv";
}  // namespace layout

enum class BoardSource { Public, Private };
std::string to_string(BoardSource s);

struct LeaderboardSnapshot {
  // Best first under `direction`.
  std::vector<double> entries;
  Direction direction = Direction::HigherBetter;
  BoardSource source = BoardSource::Public;

  std::size_t size() const { return entries.size(); }
  bool operator==(const LeaderboardSnapshot&) const = default;
};

enum class ViolationKind { Missing, Malformed, Inconsistent };
std::string to_string(ViolationKind k);

struct LayoutViolation {
  std::string path;
  ViolationKind kind = ViolationKind::Missing;
  std::string detail;

  // Remedial hint; a function of `kind` alone.
  std::string remedy() const;
  bool operator==(const LayoutViolation&) const = default;
};

class LayoutError : public HarnessError {
 public:
  explicit LayoutError(std::vector<LayoutViolation> violations);
  const std::vector<LayoutViolation>& violations() const { return violations_; }

 private:
  std::vector<LayoutViolation> violations_;
};

struct CompetitionManifest {
  std::string slug;
  fs::path root;
  std::string description;
  metrics::MetricSpec metric;
  std::vector<std::string> categories;
  std::optional<LeaderboardSnapshot> public_leaderboard;
  std::optional<LeaderboardSnapshot> private_leaderboard;
  // Header of sample_submission.csv; the first entry names the id column.
  std::vector<std::string> submission_columns;
  std::optional<std::string> run_command;
  std::optional<std::string> syntax_check_command;

  bool has_public_leaderboard() const { return public_leaderboard.has_value(); }
  bool has_private_leaderboard() const { return private_leaderboard.has_value(); }
  fs::path public_dir() const { return root / layout::kPublicDir; }
  fs::path private_dir() const { return root / layout::kPrivateDir; }
  fs::path sample_submission_path() const { return root / layout::kSampleSubmission; }
  fs::path answer_path() const { return root / layout::kAnswers; }
  const std::string& id_column() const { return submission_columns.front(); }

  bool operator==(const CompetitionManifest&) const = default;
};

// One score per row, optional header (detected by a non-numeric first row);
// a header column named `score` selects that column. Throws Malformed.
LeaderboardSnapshot load_leaderboard(const fs::path& path, Direction direction,
                                     BoardSource source);

// Never throws for content problems; IoError when the filesystem refuses reads.
std::vector<LayoutViolation> validate_layout(
    const fs::path& root,
    const metrics::MetricRegistry& metrics = metrics::MetricRegistry::global());

// Throws MetricUnknown for an unregistered metric, LayoutError otherwise.
CompetitionManifest load_competition(
    const fs::path& root,
    const metrics::MetricRegistry& metrics = metrics::MetricRegistry::global());

// Contents of data_structure.txt when present, otherwise an indented tree of
// `public_dir` in byte-lexicographic order.
std::string data_structure_summary(const fs::path& public_dir, std::size_t max_depth = 3,
                                   std::size_t max_entries_per_dir = 20);

struct RegistryFailure {
  std::string slug;
  std::vector<LayoutViolation> violations;
};

struct RegistryListing {
  std::vector<CompetitionManifest> competitions;
  std::vector<RegistryFailure> failures;
};

RegistryListing list_competitions(
    const fs::path& registry_root,
    const metrics::MetricRegistry& metrics = metrics::MetricRegistry::global());

}  // namespace mlharness::registry
