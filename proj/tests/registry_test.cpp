#include <gtest/gtest.h>

#include <algorithm>

#include "mlharness/common.hpp"
#include "mlharness/registry/task_registry.hpp"
#include "support/test_support.hpp"

using namespace mlharness;
using namespace mlharness::registry;
using mlh_test::TempDir;

namespace {

bool has_violation(const std::vector<LayoutViolation>& vs, ViolationKind kind, const std::string& path) {
  return std::any_of(vs.begin(), vs.end(), [&](const auto& v) { return v.kind == kind && v.path == path; });
}

std::vector<LayoutViolation> violations_of(const fs::path& root) {
  try {
    load_competition(root);
  } catch (const LayoutError& e) {
    return e.violations();
  }
  return {};
}

}  // namespace

TEST(Registry, FixtureLoadsWithDirectorySlug) {
  TempDir tmp;
  mlh_test::Fixture f = mlh_test::make_fixture(tmp.path());
  EXPECT_EQ(f.manifest.slug, "synthetic-rmse-7");
  EXPECT_EQ(f.manifest.slug, f.info.root.filename().string());
  EXPECT_EQ(f.manifest.metric.name, "rmse");
  EXPECT_EQ(f.manifest.metric.direction, Direction::LowerBetter);
  EXPECT_EQ(f.manifest.submission_columns, (std::vector<std::string>{"id", "target"}));
  ASSERT_TRUE(f.manifest.has_public_leaderboard());
  ASSERT_TRUE(f.manifest.has_private_leaderboard());
  EXPECT_EQ(f.manifest.public_leaderboard->size(), 10u);
  EXPECT_TRUE(validate_layout(f.info.root).empty());
}

TEST(Registry, MissingAnswersIsReported) {
  TempDir tmp;
  auto f = mlh_test::make_fixture(tmp.path());
  fs::remove(f.info.root / layout::kAnswers);
  const auto vs = violations_of(f.info.root);
  EXPECT_TRUE(has_violation(vs, ViolationKind::Missing, "data/private/test_answer.csv"));
}

TEST(Registry, OppositeLeaderboardDirectionsAreInconsistent) {
  TempDir tmp;
  auto f = mlh_test::make_fixture(tmp.path());
  const auto manifest = f.info.root / layout::kManifest;
  write_file(manifest.string(),
             "public_direction = higher_better\nprivate_direction = lower_better\n" + read_file(manifest.string()));
  const auto vs = violations_of(f.info.root);
  ASSERT_FALSE(vs.empty());
  EXPECT_TRUE(std::any_of(vs.begin(), vs.end(), [](const auto& v) { return v.kind == ViolationKind::Inconsistent; }));
}

TEST(Registry, EmptyDirectoryListsEveryRequiredPath) {
  TempDir tmp;
  const auto vs = validate_layout(tmp.path());
  for (const char* p : {layout::kManifest, layout::kDescription, layout::kSampleSubmission, layout::kAnswers,
                        layout::kAnyLeaderboard}) {
    EXPECT_TRUE(has_violation(vs, ViolationKind::Missing, p)) << p;
  }
}

TEST(Registry, NonNumericLeaderboardCellIsMalformed) {
  TempDir tmp;
  auto f = mlh_test::make_fixture(tmp.path());
  write_file((f.info.root / layout::kPublicLeaderboard).string(), "score\n0.5\nabc\n");
  const auto vs = validate_layout(f.info.root);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs[0].kind, ViolationKind::Malformed);
  EXPECT_EQ(vs[0].path, layout::kPublicLeaderboard);
  EXPECT_FALSE(vs[0].remedy().empty());
}

TEST(Registry, UnknownMetricRaises) {
  TempDir tmp;
  auto f = mlh_test::make_fixture(tmp.path());
  write_file((f.info.root / layout::kManifest).string(), "metric = nope\n");
  EXPECT_THROW(load_competition(f.info.root), MetricUnknown);
}

TEST(Leaderboard, SortsBestFirst) {
  TempDir tmp;
  write_file((tmp / "hb.csv").string(), "0.9\n0.7\n0.8\n");
  const auto hb = load_leaderboard(tmp / "hb.csv", Direction::HigherBetter, BoardSource::Public);
  EXPECT_EQ(hb.entries, (std::vector<double>{0.9, 0.8, 0.7}));
  write_file((tmp / "lb.csv").string(), "1.2\n");
  const auto lb = load_leaderboard(tmp / "lb.csv", Direction::LowerBetter, BoardSource::Private);
  EXPECT_EQ(lb.entries, (std::vector<double>{1.2}));
  EXPECT_EQ(lb.size(), 1u);
  write_file((tmp / "empty.csv").string(), "");
  EXPECT_THROW(load_leaderboard(tmp / "empty.csv", Direction::HigherBetter, BoardSource::Public), Malformed);
}

TEST(Leaderboard, ScoreColumnIsSelectedByHeader) {
  TempDir tmp;
  write_file((tmp / "b.csv").string(), "team,score\nx,0.2\ny,0.4\n");
  const auto b = load_leaderboard(tmp / "b.csv", Direction::LowerBetter, BoardSource::Public);
  EXPECT_EQ(b.entries, (std::vector<double>{0.2, 0.4}));
}

TEST(DataStructure, TreeAndPassthrough) {
  TempDir tmp;
  write_file((tmp / "train.csv").string(), "a\n");
  EXPECT_EQ(data_structure_summary(tmp.path()), "train.csv\n");
  write_file((tmp / "data_structure.txt").string(), "CUSTOM");
  EXPECT_EQ(data_structure_summary(tmp.path()), "CUSTOM");
}

TEST(DataStructure, TruncatesLongDirectories) {
  TempDir tmp;
  for (int i = 0; i < 100; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "f%03d.txt", i);
    write_file((tmp / name).string(), "");
  }
  const std::string tree = data_structure_summary(tmp.path(), 3, 5);
  EXPECT_EQ(tree, "f000.txt\nf001.txt\nf002.txt\nf003.txt\nf004.txt\n\xE2\x80\xA6 (95 more)\n");
}

TEST(Registry, ListingSeparatesBrokenCompetitions) {
  TempDir tmp;
  EXPECT_TRUE(list_competitions(tmp.path()).competitions.empty());
  cli::FixtureSpec spec;
  spec.slug = "b";
  cli::generate_fixture_competition(tmp.path(), 1, spec);
  spec.slug = "a";
  cli::generate_fixture_competition(tmp.path(), 2, spec);
  auto listing = list_competitions(tmp.path());
  ASSERT_EQ(listing.competitions.size(), 2u);
  EXPECT_EQ(listing.competitions[0].slug, "a");
  EXPECT_EQ(listing.competitions[1].slug, "b");
  fs::remove(tmp / "b" / "data/public/description.txt");
  listing = list_competitions(tmp.path());
  ASSERT_EQ(listing.competitions.size(), 1u);
  ASSERT_EQ(listing.failures.size(), 1u);
  EXPECT_EQ(listing.failures[0].slug, "b");
}
