#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "mlharness/common.hpp"
#include "mlharness/metrics/builtin.hpp"
#include "mlharness/metrics/metric_registry.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace mlharness;
using namespace mlharness::metrics;
using mlh_test::TempDir;

namespace {

SubmissionTable table(const std::string& text) { return SubmissionTable::from_csv(parse_csv(text)); }

MetricSpec spec_for(const std::string& name, MetricParams params = {}) {
  const auto& reg = MetricRegistry::global();
  return {name, reg.resolve_params(name, params), reg.get(name).direction};
}

}  // namespace

TEST(RocAuc, MatchesPairCountingOnSmallInputs) {
  SeededRng rng(2024);
  std::size_t checked = 0;
  for (std::size_t n = 2; n <= 12; ++n) {
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> labels(n), scores(n);
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<double>(rng.below(2));
        // Half the cases draw from a coarse grid so ties are common.
        scores[i] = trial % 2 ? static_cast<double>(rng.below(4)) / 4.0 : rng.uniform();
      }
      labels[0] = 0.0;
      labels[1] = 1.0;
      ASSERT_NEAR(roc_auc(labels, scores), mlh_test::oracle::auc_pairs(labels, scores), 1e-12)
          << "n=" << n << " trial=" << trial;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 11u * 300u);
}

TEST(RocAuc, DegenerateInputs) {
  const std::vector<double> one_class = {1, 1, 1};
  const std::vector<double> s = {0.1, 0.2, 0.3};
  EXPECT_THROW(roc_auc(one_class, s), DegenerateInput);
  const std::vector<double> bad = {0, 2, 1};
  EXPECT_THROW(roc_auc(bad, s), DegenerateInput);
}

TEST(LogLoss, HalfEverywhereIsLnTwo) {
  const std::vector<double> labels = {0, 1, 1, 0, 1, 0, 0};
  const std::vector<double> half(labels.size(), 0.5);
  EXPECT_NEAR(log_loss(labels, half), std::log(2.0), 1e-9);
  const auto answers = table("id,target\n1,0\n2,1\n3,1\n4,0\n");
  const auto sub = table("id,target\n1,0.5\n2,0.5\n3,0.5\n4,0.5\n");
  EXPECT_NEAR(evaluate(spec_for("log_loss"), sub, answers).raw_score, std::log(2.0), 1e-9);
}

TEST(LogLoss, ClipsCertainMistakes) {
  const std::vector<double> labels = {1};
  const std::vector<double> probs = {0.0};
  EXPECT_NEAR(log_loss(labels, probs), -std::log(kProbabilityClip), 1e-9);
}

TEST(Regression, HandComputedValues) {
  const std::vector<double> t = {1, 2, 3, 4};
  const std::vector<double> p = {2, 2, 2, 2};
  EXPECT_DOUBLE_EQ(mse(t, p), 1.5);
  EXPECT_DOUBLE_EQ(rmse(t, p), std::sqrt(1.5));
  EXPECT_DOUBLE_EQ(mae(t, p), 1.0);
  const std::vector<double> z = {0, 0};
  EXPECT_DOUBLE_EQ(smape(z, z), 0.0);
  const std::vector<double> a = {1};
  const std::vector<double> b = {3};
  EXPECT_DOUBLE_EQ(smape(a, b), 100.0);
  const std::vector<double> e1 = {std::exp(1.0) - 1.0};
  const std::vector<double> e0 = {0.0};
  EXPECT_NEAR(rmsle(e1, e0), 1.0, 1e-12);
}

TEST(MapAtK, FourItemFixtureMatchesBruteForce) {
  const std::vector<std::vector<std::string>> truth = {{"a"}, {"b"}, {"c"}, {"d"}};
  const std::vector<std::vector<std::string>> pred = {
      {"a", "b", "c"}, {"a", "b", "c"}, {"a", "b", "c"}, {"a", "b", "c"}};
  const double expected = mlh_test::oracle::map_at_k(truth, pred, 3);
  EXPECT_NEAR(expected, (1.0 + 0.5 + 1.0 / 3.0 + 0.0) / 4.0, 1e-12);
  EXPECT_NEAR(map_at_k(truth, pred, 3), expected, 1e-12);

  const auto answers = table("id,labels\n1,a\n2,b\n3,c\n4,d\n");
  const auto sub = table("id,labels\n1,a b c\n2,a b c\n3,a b c\n4,a b c\n");
  EXPECT_NEAR(evaluate(spec_for("map_at_k", {{"k", "3"}}), sub, answers).raw_score, expected, 1e-12);
}

TEST(MapAtK, RandomCasesMatchBruteForce) {
  SeededRng rng(5);
  const std::vector<std::string> items = {"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::vector<std::string>> truth(4), pred(4);
    for (std::size_t r = 0; r < 4; ++r) {
      const std::size_t nt = 1 + rng.below(3);
      for (std::size_t i = 0; i < nt; ++i) truth[r].push_back(items[rng.below(items.size())]);
      const std::size_t np = rng.below(6);
      for (std::size_t i = 0; i < np; ++i) pred[r].push_back(items[rng.below(items.size())]);
    }
    const std::size_t k = 1 + rng.below(5);
    ASSERT_NEAR(map_at_k(truth, pred, k), mlh_test::oracle::map_at_k(truth, pred, k), 1e-12) << trial;
  }
}

TEST(FBeta, BinaryAndMacro) {
  const std::vector<std::string> t = {"1", "1", "0", "0"};
  const std::vector<std::string> p = {"1", "0", "1", "0"};
  // Binary: precision 1/2, recall 1/2.
  EXPECT_NEAR(f_beta(t, p, 1.0, FbetaAverage::Binary), 0.5, 1e-12);
  EXPECT_NEAR(f_beta(t, p, 2.0, FbetaAverage::Binary), 0.5, 1e-12);
  EXPECT_NEAR(f_beta(t, p, 1.0, FbetaAverage::Macro), 0.5, 1e-12);
  EXPECT_NEAR(f_beta(t, p, 1.0, FbetaAverage::Micro), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(accuracy(t, p), 0.5);
}

TEST(Kappa, PerfectAndReversed) {
  const std::vector<long> t = {0, 1, 2, 3};
  const std::vector<long> rev = {3, 2, 1, 0};
  EXPECT_NEAR(quadratic_weighted_kappa(t, t, 0, 3), 1.0, 1e-12);
  EXPECT_NEAR(quadratic_weighted_kappa(t, rev, 0, 3), -1.0, 1e-12);
}

TEST(Gini, OrderInvariantOfScale) {
  const std::vector<double> t = {1, 0, 3, 0, 2};
  std::vector<double> p = t;
  EXPECT_NEAR(normalized_gini(t, p), 1.0, 1e-12);
  for (auto& v : p) v = 10.0 * v + 5.0;
  EXPECT_NEAR(normalized_gini(t, p), 1.0, 1e-12);
}

// Every builtin, scored on answers against themselves, reaches its optimum
// and is at least as good as the fixture's reference predictions.
TEST(Builtins, IdentityReachesOptimum) {
  const std::map<std::string, double> optimum = {
      {"accuracy", 1.0},
      {"rmse", 0.0},
      {"rmsle", 0.0},
      {"mae", 0.0},
      {"mse", 0.0},
      {"log_loss", 0.0},
      {"multiclass_log_loss", 0.0},
      {"roc_auc", 1.0},
      {"mean_columnwise_roc_auc", 1.0},
      {"f_beta", 1.0},
      {"map_at_k", 1.0},
      {"smape", 0.0},
      {"quadratic_weighted_kappa", 1.0},
      {"normalized_gini", 1.0},
  };
  TempDir tmp;
  const auto names = builtin_metrics();
  EXPECT_EQ(names.size(), optimum.size());
  for (const auto& name : names) {
    ASSERT_TRUE(optimum.count(name)) << name;
    const auto f = mlh_test::make_fixture(tmp.path(), 3, name);
    const auto answers = SubmissionTable::load(f.manifest.answer_path().string());
    const double best = evaluate(f.manifest.metric, answers, answers).raw_score;
    EXPECT_NEAR(best, optimum.at(name), 1e-12) << name;
    EXPECT_FALSE(strictly_better(f.info.reference_score, best, f.manifest.metric.direction)) << name;
  }
}

TEST(Registry, BuiltinNamesAndCustomRegistration) {
  auto reg = MetricRegistry::with_builtins();
  EXPECT_TRUE(reg.contains("roc_auc"));
  EXPECT_TRUE(reg.contains("smape"));
  EXPECT_TRUE(reg.contains("quadratic_weighted_kappa"));
  EXPECT_THROW(reg.get("nope"), MetricUnknown);

  MetricDefinition dup;
  dup.name = "rmse";
  dup.score = [](const SubmissionTable&, const SubmissionTable&, const MetricParams&) { return 0.0; };
  EXPECT_THROW(reg.register_metric(dup), DuplicateName);

  MetricDefinition mine;
  mine.name = "my_metric";
  mine.direction = Direction::HigherBetter;
  mine.score = [](const SubmissionTable&, const SubmissionTable&, const MetricParams&) { return 42.0; };
  reg.register_metric(mine);
  const auto answers = table("id,target\n1,0\n");
  const MetricSpec spec{"my_metric", {}, Direction::HigherBetter};
  EXPECT_EQ(evaluate(spec, answers, answers, reg).raw_score, 42.0);
  EXPECT_THROW(evaluate({"unregistered", {}, Direction::HigherBetter}, answers, answers, reg), MetricUnknown);
}

TEST(Params, DefaultsAndValidation) {
  const auto& reg = MetricRegistry::global();
  EXPECT_EQ(reg.resolve_params("map_at_k", {}).at("k"), "5");
  EXPECT_THROW(reg.resolve_params("map_at_k", {{"k", "0"}}), InvalidArgument);
  EXPECT_THROW(reg.resolve_params("f_beta", {{"average", "weighted"}}), InvalidArgument);
  EXPECT_THROW(reg.resolve_params("rmse", {{"bogus", "1"}}), InvalidArgument);
}

TEST(Validation, FormatProblems) {
  const auto answers = table("id,target\n1,0\n2,1\n");
  EXPECT_TRUE(validate_submission(answers, answers, spec_for("log_loss")).valid);

  const auto missing = table("id\n1\n2\n");
  const auto r1 = validate_submission(missing, answers, spec_for("log_loss"));
  EXPECT_FALSE(r1.valid);
  EXPECT_TRUE(r1.has(ProblemCode::MissingColumn));

  const auto negative = table("id,target\n1,-0.2\n2,0.5\n");
  EXPECT_TRUE(validate_submission(negative, answers, spec_for("log_loss")).has(ProblemCode::OutOfRange));

  const auto text = table("id,target\n1,abc\n2,0.5\n");
  EXPECT_TRUE(validate_submission(text, answers, spec_for("rmse")).has(ProblemCode::NonNumeric));

  const auto dup = table("id,target\n1,0\n1,1\n");
  EXPECT_TRUE(validate_submission(dup, answers, spec_for("rmse")).has(ProblemCode::DuplicateId));

  const auto unknown = table("id,target\n1,0\n3,1\n");
  EXPECT_TRUE(validate_submission(unknown, answers, spec_for("rmse")).has(ProblemCode::UnknownId));

  const auto extra = table("id,target,more\n1,0,0\n2,1,1\n");
  EXPECT_TRUE(validate_submission(extra, answers, spec_for("rmse")).has(ProblemCode::ExtraColumn));

  const auto short_sub = table("id,target\n1,0\n");
  EXPECT_TRUE(validate_submission(short_sub, answers, spec_for("rmse")).has(ProblemCode::RowCountMismatch));
}

TEST(Evaluate, JoinsRowsOnId) {
  const auto answers = table("id,target\n1,1\n2,2\n3,3\n");
  const auto shuffled = table("id,target\n3,3\n1,1\n2,2\n");
  EXPECT_EQ(evaluate(spec_for("rmse"), shuffled, answers).raw_score, 0.0);
  const auto result = evaluate(spec_for("rmse"), answers, answers);
  EXPECT_EQ(result.metric_name, "rmse");
  EXPECT_EQ(result.direction, Direction::LowerBetter);
}
