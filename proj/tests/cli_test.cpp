#include <gtest/gtest.h>

#include <httplib.h>

#include <functional>

#include "mlharness/cli/cli.hpp"
#include "mlharness/common.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace mlharness;
using namespace mlharness::cli;
using mlh_test::TempDir;

namespace {

const std::string kData = MLH_TEST_DATA_DIR;

struct RunSetup {
  TempDir tmp{"mlh-cli"};
  FixtureInfo fixture;

  using Endpoints = std::vector<std::pair<std::string, std::vector<std::string>>>;

  explicit RunSetup(const std::function<Endpoints(const FixtureInfo&)>& endpoints_for) {
    fixture = generate_fixture_competition(tmp / "registry", 7);
    const Endpoints endpoints = endpoints_for(fixture);
    std::string ini = "[run]\nregistry = registry\nk = 2\noutput_dir = out\n\n[env]\nmax_steps = 4\n"
                      "time_limit = 30\nworkspace_dir = work\n\n[agent]\nretry_attempts = 1\nretry_backoff = 0\n";
    for (const auto& [name, lines] : endpoints) {
      std::string script;
      for (const auto& l : lines) script += l + "\n";
      write_file((tmp / (name + ".jsonl")).string(), script);
      ini += "\n[endpoint:" + name + "]\nscript = " + name + ".jsonl\n";
    }
    write_file((tmp / "run.ini").string(), ini);
  }

  RunConfig config() const { return RunConfig::load(tmp / "run.ini"); }
};

std::vector<std::string> good_lines(const std::string& code) {
  return split(mlh_test::to_jsonl(mlh_test::known_good_script(code)), '\n');
}

rank::ScoreMatrix dominance_matrix() {
  return {{"A", "B", "C"},
          {"t1", "t2", "t3"},
          {Direction::HigherBetter, Direction::LowerBetter, Direction::HigherBetter},
          {{0.9, 0.8, 0.7}, {1.0, 2.0, std::nullopt}, {0.95, 0.5, 0.6}},
          {{0.9, 0.5, 0.2}, {0.8, 0.3, std::nullopt}, {1.0, 0.1, 0.3}},
          {{"Tabular"}, {"Tabular", "NLP"}, {"NLP"}}};
}

env::TrajectoryRecord record(std::size_t step, const std::string& type, std::optional<double> reward) {
  env::TrajectoryRecord r;
  r.step_index = step;
  r.action = {{"action_type", type}, {"args", type == "request_info" || type == "get_history"
                                                  ? env::json::object()
                                                  : env::json{{"code", "print(" + std::to_string(step) + ")"}}}};
  r.observation = {{"kind", "execution"}, {"feedback_text", "ok"}};
  if (type == "execute_code" || type == "validate_code") {
    r.observation["outcome"] = {{"status", reward ? "Succeeded" : "Failed"},
                                {"error_class", reward ? env::json(nullptr) : env::json("RuntimeError")}};
  }
  r.reward = reward;
  return r;
}

}  // namespace

TEST(Fixture, LoadsAndIsDeterministic) {
  TempDir a, b;
  const auto fa = generate_fixture_competition(a.path(), 7);
  const auto fb = generate_fixture_competition(b.path(), 7);
  EXPECT_EQ(fa.slug, "synthetic-rmse-7");
  EXPECT_NO_THROW(registry::load_competition(fa.root));
  EXPECT_EQ(mlh_test::snapshot(fa.root), mlh_test::snapshot(fb.root));
  EXPECT_EQ(fa.reference_score, fb.reference_score);
  const auto manifest = registry::load_competition(fa.root);
  EXPECT_EQ(manifest.public_leaderboard->size(), 10u);
  EXPECT_FALSE(fs::exists(fa.root / "data/public/solution.py"));
  EXPECT_THROW(generate_fixture_competition(a.path(), 7), IoError);
  FixtureSpec nope;
  nope.metric = "nope";
  EXPECT_THROW(generate_fixture_competition(a.path(), 1, nope), MetricUnknown);
  const auto other = generate_fixture_competition(a.path(), 8);
  EXPECT_NE(mlh_test::snapshot(other.root), mlh_test::snapshot(fa.root));
}

TEST(Fixture, ReferenceScoreMatchesHandComputation) {
  TempDir tmp;
  const auto f = generate_fixture_competition(tmp.path(), 7);
  EXPECT_NEAR(f.reference_score, mlh_test::oracle::rmse_fixture_reward(f.root).rmse, 1e-12);
}

TEST(RunConfigFile, ParsesAndRejectsUnknownKeys) {
  TempDir tmp;
  const auto cfg = RunConfig::parse(
      "[run]\nregistry = reg\nk = 3\nworkers = 2\n[env]\nmax_steps = 5\nmemory_limit = 2G\n"
      "[endpoint:m1]\nbase_url = http://localhost:1\nmodel = x\n",
      tmp.path());
  EXPECT_EQ(cfg.registry_root, tmp / "reg");
  EXPECT_EQ(cfg.k, 3u);
  EXPECT_EQ(cfg.workers, 2u);
  EXPECT_EQ(cfg.env.max_steps, 5u);
  EXPECT_EQ(cfg.env.sandbox.memory_limit, 2ULL << 30);
  ASSERT_EQ(cfg.endpoints.size(), 1u);
  EXPECT_EQ(cfg.endpoints[0].endpoint.name, "m1");
  EXPECT_THROW(RunConfig::parse("[run]\nregistry = r\ncolour = blue\n[endpoint:m]\nscript = s\n", tmp.path()),
               InvalidArgument);
  EXPECT_THROW(RunConfig::parse("[mystery]\n", tmp.path()), InvalidArgument);
}

TEST(Run, ScriptedPipelineAndResume) {
  RunSetup setup([](const FixtureInfo& f) {
    return RunSetup::Endpoints{{"scripted", good_lines(f.solution_code)}, {"down", {"{\"error\": \"offline\"}"}}};
  });
  const auto expected = mlh_test::oracle::rmse_fixture_reward(setup.fixture.root);

  auto summary = cmd_run(setup.config());
  EXPECT_EQ(summary.executed, 2u);
  EXPECT_EQ(summary.skipped, 0u);
  ASSERT_EQ(summary.matrix.models, (std::vector<std::string>{"scripted", "down"}));
  ASSERT_EQ(summary.matrix.tasks.size(), 1u);
  ASSERT_TRUE(summary.matrix.scores[0][0]);
  EXPECT_DOUBLE_EQ(*summary.matrix.scores[0][0], setup.fixture.reference_score);
  EXPECT_EQ(summary.matrix.human_ranks[0][0], expected.reward);
  EXPECT_FALSE(summary.matrix.scores[0][1]);

  const auto& down = summary.cells[0].model == "down" ? summary.cells[0] : summary.cells[1];
  EXPECT_FALSE(down.feasible());
  EXPECT_NE(down.error.find("EndpointUnavailable"), std::string::npos);

  const auto csv = rank::read_score_matrix_csv(summary.score_matrix_path.string());
  EXPECT_EQ(csv, summary.matrix);
  EXPECT_TRUE(fs::exists(setup.tmp / "out/trajectories/scripted" / setup.fixture.slug / "run_0.jsonl"));
  EXPECT_TRUE(fs::exists(setup.tmp / "out/usage/scripted" / setup.fixture.slug / "run_1.csv"));

  const auto again = cmd_run(setup.config());
  EXPECT_EQ(again.executed, 0u);
  EXPECT_EQ(again.skipped, 2u);
  EXPECT_EQ(again.matrix, summary.matrix);
}

TEST(CellJson, RoundTrip) {
  CellResult c;
  c.model = "m";
  c.task = "t";
  c.direction = Direction::LowerBetter;
  c.categories = {"Tabular"};
  c.score = 0.25;
  c.human_rank = 0.5;
  c.best_episode = 1;
  const auto back = CellResult::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Rank, DominantModelLeadsEveryColumn) {
  const auto tables = cmd_rank(dominance_matrix());
  ASSERT_EQ(tables.size(), 3u);
  EXPECT_EQ(tables.back().category, "Overall");
  for (const auto& t : tables) {
    ASSERT_FALSE(t.rows.empty());
    const auto& top = t.rows.front();
    EXPECT_EQ(top.model, "A") << t.category;
    for (const auto& r : t.rows) {
      EXPECT_GE(top.aup, r.aup);
      EXPECT_GE(*top.h_rank, *r.h_rank);
      EXPECT_GE(top.elo, r.elo);
    }
  }
}

TEST(Rank, SingleModelSitsAtOffset) {
  rank::ScoreMatrix m{{"solo"}, {"t"}, {Direction::HigherBetter}, {{0.5}}, {}, {}};
  const auto tables = cmd_rank(m);
  ASSERT_EQ(tables.size(), 1u);
  EXPECT_EQ(tables[0].rows[0].elo, 1000.0);
  EXPECT_FALSE(tables[0].rows[0].h_rank);
  EXPECT_EQ(render_row(tables[0].rows[0]), "solo | 1.000 | n/a | 1000");
}

TEST(Rank, PrecomputedRowRendersVerbatim) {
  const auto tables = read_precomputed_tables(read_file(kData + "/precomputed_table.csv"));
  ASSERT_FALSE(tables.empty());
  bool found = false;
  for (const auto& t : tables) {
    for (const auto& r : t.rows) {
      if (t.category == "MLE-Lite" && r.model == "gpt-4o-mini") {
        EXPECT_EQ(render_row(r), "gpt-4o-mini | 1.492 | 21.21 | 753");
        found = true;
      }
    }
  }
  EXPECT_TRUE(found);
  EXPECT_NE(render_tables(tables).find("gpt-4o-mini | 1.492 | 21.21 | 753\n"), std::string::npos);
}

TEST(Difficulty, TableEndpoints) {
  const auto rows = cmd_difficulty(read_file(kData + "/difficulty_table.csv"));
  ASSERT_EQ(rows.size(), 50u);
  EXPECT_EQ(rows.front().task, "tabular-playground-series-dec-2021");
  EXPECT_EQ(format_fixed(rows.front().avg_human_rank, 6), "1.000000");
  EXPECT_EQ(rows.back().task, "santander-customer-transaction-prediction");
  EXPECT_EQ(format_fixed(rows.back().avg_human_rank, 6), "0.000000");
  const std::string text = render_difficulty(rows);
  EXPECT_EQ(text.find("tabular-playground-series-dec-2021 | 1.000000"), text.find('\n') + 1);
}

TEST(Difficulty, UniformAndSingle) {
  const auto rows = cmd_difficulty("task,avg_human_rank\nb,0.5\nc,0.5\na,0.5\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].task, "a");
  EXPECT_EQ(rows[2].task, "c");
  EXPECT_EQ(cmd_difficulty("task,avg_human_rank\nonly,0.2\n").size(), 1u);
  EXPECT_EQ(cmd_difficulty(rank::score_matrix_to_csv(dominance_matrix())).size(), 3u);
}

TEST(Report, ExampleArithmetic) {
  const std::vector<env::TrajectoryRecord> three_one = {
      record(1, "execute_code", 0.1), record(2, "execute_code", std::nullopt), record(3, "validate_code", std::nullopt),
      record(4, "execute_code", 0.2)};
  const auto bundle = analyze({{"m", "t", three_one}});
  ASSERT_EQ(bundle.models.size(), 1u);
  EXPECT_EQ(bundle.models[0].executes, 3u);
  EXPECT_EQ(bundle.models[0].validates, 1u);
  EXPECT_DOUBLE_EQ(bundle.models[0].execution_ratio, 0.75);

  const std::vector<env::TrajectoryRecord> series = {
      record(1, "request_info", std::nullopt), record(2, "execute_code", 0.4),
      record(3, "get_history", std::nullopt), record(4, "execute_code", 0.6)};
  const auto stats = trajectory_stats(series);
  EXPECT_EQ(stats.stepwise_best, (std::vector<double>{0.4, 0.6}));
  EXPECT_EQ(stats.best, 0.6);
}

TEST(Report, FailureBucketsAndPadding) {
  const std::vector<env::TrajectoryRecord> a = {record(1, "execute_code", std::nullopt),
                                                record(2, "execute_code", 0.5)};
  const std::vector<env::TrajectoryRecord> b = {record(1, "execute_code", 0.3)};
  const auto bundle = analyze({{"m", "t1", a}, {"m", "t2", b}});
  const auto& m = bundle.models[0];
  EXPECT_EQ(m.tasks, 2u);
  EXPECT_EQ(m.stepwise_best, (std::vector<double>{0.15, 0.4}));
  EXPECT_EQ(m.execution_failures, 1u);
  EXPECT_EQ(m.error_counts.at("Execution Failed"), 1u);
  EXPECT_DOUBLE_EQ(m.error_shares.at("Execution Failed"), 1.0);
}

TEST(Report, DirectoryLoading) {
  TempDir tmp;
  EXPECT_THROW(cmd_report(tmp.path()), MalformedTrajectory);
  EXPECT_THROW(cmd_report(tmp / "missing"), MalformedTrajectory);
  fs::create_directories(tmp / "trajectories/modelA/task1");
  write_file((tmp / "trajectories/modelA/task1/run_0.jsonl").string(),
             record(1, "execute_code", 0.5).to_json().dump() + "\n");
  const auto files = load_trajectory_dir(tmp.path());
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(files[0].model, "modelA");
  EXPECT_EQ(files[0].task, "task1");
  const auto bundle = cmd_report(tmp.path());
  EXPECT_EQ(bundle.models[0].model, "modelA");
  EXPECT_FALSE(render_report(bundle).empty());
}

TEST(Validate, RendersViolations) {
  const std::vector<registry::LayoutViolation> vs = {
      {"data/private/test_answer.csv", registry::ViolationKind::Missing, "file not found"}};
  const std::string text = render_violations(vs);
  EXPECT_EQ(text.rfind("data/private/test_answer.csv: Missing: file not found (", 0), 0u);
}

TEST(Serve, HttpRoutes) {
  TempDir tmp;
  const auto f = generate_fixture_competition(tmp / "registry", 7);
  ServeConfig cfg;
  cfg.service.registry_root = tmp / "registry";
  cfg.service.env_defaults = mlh_test::test_env_config(tmp / "work", 5);
  cfg.port = 0;
  StepServer server(cfg);
  const int port = server.start();
  ASSERT_GT(port, 0);

  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/competitions");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  res = client.Post("/envs", env::json{{"competition_slug", f.slug}}.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const std::string id = env::json::parse(res->body)["env_id"];

  res = client.Post("/envs/" + id + "/step", R"({"action_type": "request_info", "args": {}})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto body = env::json::parse(res->body);
  EXPECT_EQ(body["observation"]["kind"], "info");
  EXPECT_TRUE(body["observation"].contains("description"));

  res = client.Post("/envs/unknown/step", R"({"action_type": "request_info"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  res = client.Post("/envs/" + id + "/step", R"({"action_type": 17})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(env::json::parse(res->body)["error"], "ParseFailure");

  res = client.Post("/envs/" + id + "/step", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(env::json::parse(res->body)["reason"], "BadPayload");

  res = client.Get("/envs/" + id + "/history?last_n=1");
  ASSERT_TRUE(res);
  EXPECT_EQ(env::json::parse(res->body)["records"].size(), 1u);
  res = client.Post("/envs/" + id + "/reset", "", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  res = client.Delete("/envs/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  server.stop();
}
