// One pass/fail line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "mlharness/agent/agent.hpp"
#include "mlharness/cli/cli.hpp"
#include "mlharness/common.hpp"
#include "mlharness/metrics/builtin.hpp"
#include "mlharness/metrics/metric_registry.hpp"
#include "mlharness/rank/rank.hpp"
#include "mlharness/sandbox/sandbox.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace mlharness;
namespace oracle = mlh_test::oracle;
using mlh_test::TempDir;
namespace fs = std::filesystem;

namespace {

struct Checks {
  std::vector<std::string> failures;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

template <typename F>
bool expect_throw(F&& f) {
  try {
    f();
  } catch (const HarnessError&) {
    return true;
  }
  return false;
}

std::string num(double v) { return format_roundtrip(v); }

registry::LeaderboardSnapshot board(std::vector<double> entries) {
  std::sort(entries.rbegin(), entries.rend());
  return {entries, Direction::HigherBetter, registry::BoardSource::Public};
}

agent::LlmEndpoint scripted_endpoint() {
  agent::LlmEndpoint e;
  e.name = "scripted";
  e.model = "scripted";
  return e;
}

std::vector<agent::Completion> completions(const std::vector<std::string>& texts) {
  std::vector<agent::Completion> out;
  for (const auto& t : texts) out.push_back({t, std::nullopt});
  return out;
}

// ---------------------------------------------------------------------------

void human_rank_suite(Checks& c) {
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 20; ++n) {
    for (std::size_t p = 0; p <= n; ++p) {
      // p entries at least as good as the score (the first of them tied), n - p worse.
      std::vector<double> entries;
      for (std::size_t i = 0; i < p; ++i) entries.push_back(i == 0 ? 50.0 : 50.0 + static_cast<double>(i));
      for (std::size_t i = p; i < n; ++i) entries.push_back(50.0 - 1.0 - static_cast<double>(i));
      const double got = rank::human_rank(50.0, board(entries));
      // 1 - p/N as an exact rational, rounded once.
      const double expected = static_cast<double>(n - p) / static_cast<double>(n);
      c.expect(got == expected, "human_rank p=" + std::to_string(p) + " N=" + std::to_string(n) + " gave " + num(got));
      c.expect(got == oracle::human_rank(50.0, entries, true), "oracle mismatch");
      ++cases;
    }
  }
  const double combined = rank::combined_reward(5.0, board({1, 2, 3, 4, 10}), board({1, 2, 3, 8, 10}));
  c.expect(combined == 0.7, "combined_reward(0.8, 0.6) = " + num(combined));
  c.detail = std::to_string(cases) + " (p, N) pairs, combined " + num(combined);
}

void aup_suite(Checks& c) {
  SeededRng rng(20240601);
  std::size_t compared = 0, capped = 0;
  double worst = 0.0;
  auto check = [&](const rank::ScoreMatrix& m) {
    const auto expected = oracle::aup(m, 1.0, 100.0);
    const auto got = rank::aup(rank::performance_ratios(m, 1.0, 100.0)).result;
    for (const auto& row : expected.ratios)
      for (double r : row) capped += r == 100.0 ? 1 : 0;
    for (std::size_t i = 0; i < m.models.size(); ++i) worst = std::max(worst, std::fabs(got.values[i] - expected.aup[i]));
    worst = std::max(worst, std::fabs(got.tau_max - expected.tau_max));
    ++compared;
  };

  // Ratio 250 against a cap of 100.
  rank::ScoreMatrix cap{{"M1", "M2"}, {"t1", "t2"}, {Direction::LowerBetter, Direction::HigherBetter},
                        {{1.0, 250.0}, {0.8, 0.4}}, {}, {}};
  const auto cap_ratios = rank::performance_ratios(cap, 1.0, 100.0);
  c.expect(cap_ratios.ratios[0][1] == 100.0, "ratio 250 not capped at 100");
  check(cap);

  while (compared < 250) {
    rank::ScoreMatrix m;
    const std::size_t nm = 1 + rng.below(3), nt = 1 + rng.below(3);
    for (std::size_t i = 0; i < nm; ++i) m.models.push_back("m" + std::to_string(i));
    bool any = false;
    for (std::size_t t = 0; t < nt; ++t) {
      m.tasks.push_back("t" + std::to_string(t));
      m.directions.push_back(rng.below(2) ? Direction::HigherBetter : Direction::LowerBetter);
      std::vector<std::optional<double>> row;
      for (std::size_t i = 0; i < nm; ++i) {
        if (rng.uniform() < 0.3) {
          row.push_back(std::nullopt);
        } else {
          const double u = rng.uniform();
          row.push_back(u < 0.1 ? 0.002 + 0.01 * rng.uniform() : (u < 0.2 ? 100.0 + 900.0 * rng.uniform() : 0.1 + 5.0 * rng.uniform()));
          any = true;
        }
      }
      m.scores.push_back(row);
    }
    if (!any) continue;
    check(m);
  }
  c.expect(worst <= 1e-6, "max deviation " + num(worst));
  c.expect(capped > 0, "no capped ratio generated");
  c.detail = std::to_string(compared) + " matrices, " + std::to_string(capped) + " capped cells, max |diff| " + num(worst);
}

void elo_suite(Checks& c) {
  using rank::BattleOutcome;
  using rank::BattleRecord;
  const rank::EloConfig cfg;

  const std::vector<BattleRecord> sym = {{"A", "B", BattleOutcome::AWins, 1.0, ""},
                                         {"A", "B", BattleOutcome::BWins, 1.0, ""}};
  const auto s = rank::fit_bradley_terry(sym, cfg);
  c.expect(std::fabs(s.ratings[0] - 1000.0) <= 1e-3 && std::fabs(s.ratings[1] - 1000.0) <= 1e-3,
           "symmetric ratings " + num(s.ratings[0]) + ", " + num(s.ratings[1]));

  const std::vector<BattleRecord> dom(3, BattleRecord{"A", "B", BattleOutcome::AWins, 1.0, ""});
  const auto d = rank::fit_bradley_terry(dom, cfg);
  c.expect(std::fabs(d.ratings[0] + d.ratings[1] - 2000.0) <= 1e-3, "dominance sum " + num(d.ratings[0] + d.ratings[1]));
  c.expect(d.ratings[0] > d.ratings[1], "dominance order");

  std::vector<BattleRecord> three;
  const auto add = [&](const char* a, const char* b, BattleOutcome o, int n) {
    for (int i = 0; i < n; ++i) three.push_back({a, b, o, 1.0, ""});
  };
  add("A", "B", BattleOutcome::AWins, 3);
  add("A", "B", BattleOutcome::BWins, 1);
  add("B", "C", BattleOutcome::AWins, 2);
  add("B", "C", BattleOutcome::BWins, 1);
  add("A", "C", BattleOutcome::AWins, 2);
  add("A", "C", BattleOutcome::Tie, 1);
  add("C", "A", BattleOutcome::AWins, 1);
  const std::vector<std::string> models = {"A", "B", "C"};
  const auto fit = rank::fit_bradley_terry(three, cfg, models);
  const auto grid = oracle::bt_grid_ratings(three, models, cfg.base, cfg.scale, cfg.offset, cfg.lambda);
  double gap = 0.0;
  for (std::size_t i = 0; i < 3; ++i) gap = std::max(gap, std::fabs(fit.ratings[i] - grid[i]));
  c.expect(gap <= 1.0, "grid gap " + num(gap));

  rank::EloConfig boot = cfg;
  boot.bootstrap_rounds = 100;
  boot.seed = 99;
  const auto r1 = rank::bootstrap_ratings(three, boot, models);
  const auto r2 = rank::bootstrap_ratings(three, boot, models);
  c.expect(r1 == r2, "bootstrap differs between runs");
  std::ostringstream os;
  os << "symmetric " << format_fixed(s.ratings[0], 6) << ", dominance sum " << format_fixed(d.ratings[0] + d.ratings[1], 6)
     << ", grid gap " << format_fixed(gap, 3) << " points";
  c.detail = os.str();
}

void metric_suite(Checks& c) {
  SeededRng rng(77);
  std::size_t auc_cases = 0;
  for (std::size_t n = 2; n <= 12; ++n) {
    for (int t = 0; t < 200; ++t) {
      std::vector<double> labels(n), scores(n);
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<double>(rng.below(2));
        scores[i] = t % 2 ? static_cast<double>(rng.below(3)) : rng.uniform();
      }
      labels[0] = 1.0;
      labels[n - 1] = 0.0;
      const double got = metrics::roc_auc(labels, scores);
      if (std::fabs(got - oracle::auc_pairs(labels, scores)) > 1e-12) c.expect(false, "roc_auc n=" + std::to_string(n));
      ++auc_cases;
    }
  }

  const std::map<std::string, double> optimum = {
      {"accuracy", 1}, {"rmse", 0}, {"rmsle", 0}, {"mae", 0}, {"mse", 0}, {"log_loss", 0},
      {"multiclass_log_loss", 0}, {"roc_auc", 1}, {"mean_columnwise_roc_auc", 1}, {"f_beta", 1},
      {"map_at_k", 1}, {"smape", 0}, {"quadratic_weighted_kappa", 1}, {"normalized_gini", 1}};
  TempDir tmp("mlh-accept-metrics");
  std::size_t identity = 0;
  for (const auto& name : metrics::builtin_metrics()) {
    const auto it = optimum.find(name);
    if (it == optimum.end()) {
      c.expect(false, "no optimum known for " + name);
      continue;
    }
    const auto f = mlh_test::make_fixture(tmp.path(), 5, name);
    const auto answers = metrics::SubmissionTable::load(f.manifest.answer_path().string());
    const double v = metrics::evaluate(f.manifest.metric, answers, answers).raw_score;
    c.expect(std::fabs(v - it->second) <= 1e-12, name + " identity gave " + num(v));
    ++identity;
  }
  const std::vector<double> labels = {0, 1, 0, 1, 1};
  const std::vector<double> half(labels.size(), 0.5);
  const double ll = metrics::log_loss(labels, half);
  c.expect(std::fabs(ll - std::log(2.0)) <= 1e-9, "log_loss(0.5) = " + num(ll));
  c.detail = std::to_string(auc_cases) + " AUC cases, " + std::to_string(identity) + " identity checks, log_loss " +
             format_fixed(ll, 9);
}

void sandbox_suite(Checks& c) {
  TempDir tmp("mlh-accept-sandbox");
  const auto f = mlh_test::make_fixture(tmp / "registry");
  sandbox::SandboxSettings s;
  s.base_dir = tmp / "work";
  s.time_limit = 1.0;
  const auto cfg = sandbox::prepare_workspace(f.manifest, "timeout", s);
  const auto t = sandbox::run_program("while True:\n    pass\n", cfg, false);
  c.expect(t.error_class == sandbox::ErrorClass::Timeout, "loop not classified Timeout");
  c.expect(t.duration <= 2.0, "timeout took " + num(t.duration) + " s");

  auto probe_cfg = cfg;
  probe_cfg.time_limit = 30.0;
  const std::string priv = f.manifest.private_dir().string();
  const std::string probe =
      "import os\nroot = " + nlohmann::json(priv).dump() +
      "\nleaks = 0\n"
      "for n in ('test_answer.csv', 'public_leaderboard.csv', 'private_leaderboard.csv'):\n"
      "    try:\n        open(os.path.join(root, n)).read(1)\n        leaks += 1\n    except Exception:\n        pass\n"
      "try:\n    leaks += len(os.listdir(root))\nexcept Exception:\n    pass\nprint('LEAKS', leaks)\n";
  const auto p = sandbox::run_program(probe, probe_cfg, true);
  c.expect(p.status == sandbox::Status::Succeeded && p.stdout_text.find("LEAKS 0") != std::string::npos,
           "private probe " + sandbox::to_string(p.status) + ": " + p.stdout_text + p.stderr_text);
  sandbox::teardown(cfg);

  env::EnvConfig ec = mlh_test::test_env_config(tmp / "work");
  auto session = env::create_env(f.manifest, ec);
  auto r = session->step(env::Action::execute_code("print('done')\n"));
  c.expect(r.observation.error_class() == sandbox::ErrorClass::SubmissionNotCreated, "no-submission class");
  r = session->step(env::Action::execute_code(
      "import os\nos.makedirs('output', exist_ok=True)\nopen('output/submission.csv', 'w').write('id,wrong\\n1,2\\n')\n"));
  const auto* fb = std::get_if<env::ExecutionFeedback>(&r.observation.payload);
  c.expect(r.observation.error_class() == sandbox::ErrorClass::SubmissionInvalid, "malformed submission class");
  c.expect(fb && fb->format_report && !fb->format_report->valid && !fb->format_report->problems.empty(),
           "malformed submission without FormatReport");
  c.detail = "timeout after " + format_fixed(t.duration, 3) + " s, private reads blocked" +
             (sandbox::landlock_available() ? " (landlock)" : "");
}

void episode_suite(Checks& c) {
  TempDir tmp("mlh-accept-episode");
  const auto f = mlh_test::make_fixture(tmp / "registry", 7, "rmse");
  const auto expected = oracle::rmse_fixture_reward(f.info.root);
  auto session = env::create_env(f.manifest, mlh_test::test_env_config(tmp / "work", 4));
  agent::ScriptedClient client(completions(mlh_test::known_good_script(f.info.solution_code)));
  const auto result = agent::run_episode(*session, client, scripted_endpoint(), agent::PromptSet::defaults());
  c.expect(result.end == agent::EpisodeEnd::BudgetDone && session->done(), "episode did not terminate on budget");
  c.expect(result.best_human_rank == expected.reward,
           "best_human_rank " + (result.best_human_rank ? num(*result.best_human_rank) : "none") + " vs " +
               num(expected.reward));

  auto replay = env::create_env(f.manifest, mlh_test::test_env_config(tmp / "work", 4));
  std::size_t same = 0;
  for (const auto& rec : result.trajectory) {
    const auto out = replay->step(env::Action::from_json(rec.action));
    env::TrajectoryRecord copy = rec;
    copy.observation = out.observation.to_json();
    copy.reward = out.reward;
    if (env::comparable(copy) == env::comparable(rec)) ++same;
  }
  c.expect(same == result.trajectory.size() && same == 4,
           "replay matched " + std::to_string(same) + " of " + std::to_string(result.trajectory.size()));
  c.detail = "best_human_rank " + num(expected.reward) + " = (" + num(expected.public_rank) + " + " +
             num(expected.private_rank) + ") / 2, replay identical";
}

void budget_suite(Checks& c) {
  TempDir tmp("mlh-accept-budget");
  const auto f = mlh_test::make_fixture(tmp / "registry");
  auto session = env::create_env(f.manifest, mlh_test::test_env_config(tmp / "work"));
  bool done_at_15 = false;
  for (int i = 1; i <= 15; ++i) done_at_15 = session->step(env::Action::request_info()).done;
  c.expect(done_at_15, "15th step not done");
  bool raised = false;
  try {
    session->step(env::Action::request_info());
  } catch (const BudgetExhausted&) {
    raised = true;
  }
  c.expect(raised, "16th step did not raise BudgetExhausted");

  auto fresh = env::create_env(f.manifest, mlh_test::test_env_config(tmp / "work"));
  agent::ScriptedClient garbage(completions({"thinking", "more thinking", "```\nno header\n```", "ACTION: request_info"}));
  const auto r = agent::run_episode(*fresh, garbage, scripted_endpoint(), agent::PromptSet::defaults());
  c.expect(r.end == agent::EpisodeEnd::ParseFailures, "episode did not end on parse failures");
  c.expect(r.env_steps == 0 && fresh->step_count() == 0, "parse failures consumed steps");
  c.expect(r.parse_failures == 3, "parse failures " + std::to_string(r.parse_failures));
  c.detail = "16th step raised BudgetExhausted, 3 parse failures used 0 steps";
}

void reference_values_suite(Checks& c) {
  const std::string data = MLH_TEST_DATA_DIR;
  const auto rows = cli::cmd_difficulty(read_file(data + "/difficulty_table.csv"));
  c.expect(!rows.empty(), "no difficulty rows");
  if (!rows.empty()) {
    c.expect(rows.front().task == "tabular-playground-series-dec-2021" &&
                 format_fixed(rows.front().avg_human_rank, 6) == "1.000000",
             "easiest is " + rows.front().task);
    c.expect(rows.back().task == "santander-customer-transaction-prediction" &&
                 format_fixed(rows.back().avg_human_rank, 6) == "0.000000",
             "hardest is " + rows.back().task);
  }
  const auto tables = cli::read_precomputed_tables(read_file(data + "/precomputed_table.csv"));
  const std::string text = cli::render_tables(tables);
  c.expect(text.find("\ngpt-4o-mini | 1.492 | 21.21 | 753\n") != std::string::npos, "row not rendered verbatim");
  c.detail = "first " + rows.front().task + ", last " + rows.back().task + ", row \"gpt-4o-mini | 1.492 | 21.21 | 753\"";
}

// Machine-readable outputs of run -> rank -> report, keyed by relative path.
std::map<std::string, std::string> pipeline_outputs(const fs::path& root) {
  const auto f = cli::generate_fixture_competition(root / "registry", 7);
  cli::FixtureSpec second;
  second.metric = "roc_auc";
  cli::generate_fixture_competition(root / "registry", 11, second);

  const auto good = mlh_test::known_good_script(f.solution_code);
  write_file((root / "good.jsonl").string(), mlh_test::to_jsonl(good));
  write_file((root / "weak.jsonl").string(),
             mlh_test::to_jsonl({"ACTION: request_info", "ACTION: execute_code\n```python\nprint('skip')\n```",
                                 "nothing to say", "ACTION: get_history"}));
  write_file((root / "run.ini").string(),
             "[run]\nregistry = registry\nk = 2\nworkers = 2\noutput_dir = out\n\n[env]\nmax_steps = 4\n"
             "time_limit = 30\nworkspace_dir = work\n\n[endpoint:good]\nscript = good.jsonl\n\n"
             "[endpoint:weak]\nscript = weak.jsonl\n");
  const auto summary = cli::cmd_run(cli::RunConfig::load(root / "run.ini"));
  cli::RankOptions ro;
  ro.elo.seed = 42;
  const auto tables = cli::cmd_rank(summary.matrix, ro);
  const auto report = cli::cmd_report(root / "out");

  std::map<std::string, std::string> out;
  out["scores.csv"] = read_file(summary.score_matrix_path.string());
  out["rank.json"] = cli::tables_to_json(tables).dump(2);
  out["rank.txt"] = cli::render_tables(tables);
  out["report.json"] = report.to_json().dump(2);
  for (const auto& e : fs::recursive_directory_iterator(root / "out")) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).string();
    if (e.path().extension() == ".jsonl") {
      std::string lines;
      for (const auto& rec : env::read_trajectory(e.path())) lines += env::comparable(rec).dump() + "\n";
      out[rel] = lines;
    } else {
      out[rel] = read_file(e.path().string());
    }
  }
  return out;
}

void determinism_suite(Checks& c) {
  TempDir a("mlh-accept-det"), b("mlh-accept-det");
  const auto first = pipeline_outputs(a.path());
  const auto second = pipeline_outputs(b.path());
  c.expect(first.size() == second.size(), "different output sets");
  std::size_t identical = 0;
  for (const auto& [path, content] : first) {
    const auto it = second.find(path);
    if (it == second.end() || it->second != content) {
      c.expect(false, path + " differs");
    } else {
      ++identical;
    }
  }
  c.expect(first.count("scores.csv") && first.at("scores.csv").find("good") != std::string::npos, "no scores");
  c.detail = std::to_string(identical) + " outputs byte-identical";
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<void(Checks&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "HumanRank formula suite", 1.0, human_rank_suite},
      {2, "AUP oracle equivalence", 10.0, aup_suite},
      {3, "Elo suite", 30.0, elo_suite},
      {4, "Metric oracle suite", 10.0, metric_suite},
      {5, "Sandbox contract", 20.0, sandbox_suite},
      {6, "End-to-end fixture episode", 60.0, episode_suite},
      {7, "Budget and parse rules", 0.0, budget_suite},
      {8, "Reference-value fixtures", 0.0, reference_values_suite},
      {9, "Determinism", 0.0, determinism_suite},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Checks c;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.budget_seconds > 0.0 && secs >= cr.budget_seconds) {
      c.failures.push_back("took " + format_fixed(secs, 2) + " s, limit " + format_fixed(cr.budget_seconds, 0) + " s");
    }
    const bool ok = c.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("criterion %d: %s  %s (%.2f s)", cr.id, ok ? "PASS" : "FAIL", cr.name, secs);
    if (ok) {
      std::printf(" - %s\n", c.detail.c_str());
    } else {
      std::string why;
      for (std::size_t i = 0; i < c.failures.size() && i < 5; ++i) why += (i ? "; " : "") + c.failures[i];
      std::printf(" - %s\n", why.c_str());
    }
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
