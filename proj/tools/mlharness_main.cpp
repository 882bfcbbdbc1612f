#include <CLI11.hpp>
#include <iostream>

#include "mlharness/cli/cli.hpp"
#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace cli = mlharness::cli;
namespace fs = std::filesystem;

namespace {

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    mlharness::write_file(path, text);
  }
}

int do_validate(const fs::path& root) {
  const bool single = fs::exists(root / mlharness::registry::layout::kManifest);
  if (single) {
    const auto v = mlharness::registry::validate_layout(root);
    if (v.empty()) {
      std::cout << root.filename().string() << ": ok\n";
      return 0;
    }
    std::cout << cli::render_violations(v);
    return 1;
  }
  const auto listing = mlharness::registry::list_competitions(root);
  for (const auto& m : listing.competitions) std::cout << m.slug << ": ok\n";
  for (const auto& f : listing.failures) {
    std::cout << f.slug << ": invalid\n" << cli::render_violations(f.violations);
  }
  return listing.failures.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive environment harness for machine learning engineering agents"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run every endpoint against the selected competitions");
  run->add_option("config", run_config, "Run configuration file")->required()->check(CLI::ExistingFile);

  std::string scores, precomputed, rank_json, category;
  std::uint64_t seed = 0;
  std::size_t rounds = 100;
  bool literal = false;
  auto* rank = app.add_subcommand("rank", "Render AUP, H-Rank and Elo leaderboard tables");
  auto* scores_opt = rank->add_option("--scores", scores, "Score matrix CSV")->check(CLI::ExistingFile);
  auto* pre_opt =
      rank->add_option("--precomputed", precomputed, "CSV of category, model, aup, h_rank, elo to render as is")
          ->check(CLI::ExistingFile);
  scores_opt->excludes(pre_opt);
  rank->add_option("--seed", seed, "Bootstrap seed");
  rank->add_option("--rounds", rounds, "Bootstrap rounds");
  rank->add_option("--category", category, "Only this category");
  rank->add_flag("--literal-aup", literal, "Integrate performance profiles from tau = 1");
  rank->add_option("--json", rank_json, "Also write the tables as JSON");

  std::string report_dir, report_json;
  auto* report = app.add_subcommand("report", "Summarise trajectories");
  report->add_option("dir", report_dir, "Trajectory directory or run output directory")->required();
  report->add_option("--json", report_json, "Where to write the machine-readable report");

  cli::ServeConfig serve_cfg;
  std::string serve_registry, serve_traj;
  std::size_t serve_steps = 15;
  double serve_time = 300.0;
  auto* serve = app.add_subcommand("serve", "Serve the step API over HTTP");
  serve->add_option("--registry", serve_registry, "Competition registry")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--host", serve_cfg.host, "Bind address");
  serve->add_option("--port", serve_cfg.port, "Port, 0 picks one");
  serve->add_option("--idle-timeout", serve_cfg.service.idle_timeout_seconds, "Seconds before idle sessions close");
  serve->add_option("--trajectory-dir", serve_traj, "Where session trajectories are written");
  serve->add_option("--max-steps", serve_steps, "Default step budget");
  serve->add_option("--time-limit", serve_time, "Default seconds per run");

  cli::FixtureSpec fixture_spec;
  std::string fixture_out = ".";
  std::uint64_t fixture_seed = 7;
  bool print_solution = false;
  auto* fixture = app.add_subcommand("fixture", "Generate a synthetic competition");
  fixture->add_option("--out", fixture_out, "Parent directory");
  fixture->add_option("--seed", fixture_seed, "Seed");
  fixture->add_option("--metric", fixture_spec.metric, "Builtin metric");
  fixture->add_option("--train", fixture_spec.n_train, "Training rows");
  fixture->add_option("--test", fixture_spec.n_test, "Test rows");
  fixture->add_option("--public", fixture_spec.public_size, "Public leaderboard entries");
  fixture->add_option("--private", fixture_spec.private_size, "Private leaderboard entries");
  fixture->add_option("--slug", fixture_spec.slug, "Competition slug");
  fixture->add_flag("--print-solution", print_solution, "Print the reference solution");

  std::string difficulty_input;
  auto* difficulty = app.add_subcommand("difficulty", "Rank competitions by average HumanRank");
  difficulty->add_option("input", difficulty_input, "Score matrix or averages CSV")
      ->required()
      ->check(CLI::ExistingFile);

  std::string validate_root;
  auto* validate = app.add_subcommand("validate", "Check competition layout");
  validate->add_option("path", validate_root, "Competition or registry directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto config = cli::RunConfig::load(run_config);
      const auto summary = cli::cmd_run(config);
      for (const auto& c : summary.cells) {
        std::cout << c.model << " " << c.task << " "
                  << (c.feasible() ? "score=" + mlharness::format_fixed(*c.score, 6) +
                                         " human_rank=" + mlharness::format_fixed(c.human_rank.value_or(0.0), 6)
                                   : "infeasible " + c.error)
                  << "\n";
      }
      std::cout << "ran " << summary.executed << " cells, skipped " << summary.skipped << "; wrote "
                << summary.score_matrix_path.string() << "\n";
      return 0;
    }
    if (*rank) {
      std::vector<cli::LeaderboardTable> tables;
      if (!precomputed.empty()) {
        tables = cli::read_precomputed_tables(mlharness::read_file(precomputed));
      } else {
        if (scores.empty()) throw mlharness::InvalidArgument("rank needs --scores or --precomputed");
        cli::RankOptions options;
        options.elo.seed = seed;
        options.elo.bootstrap_rounds = rounds;
        options.aup.literal_lower_bound = literal;
        const auto matrix = mlharness::rank::read_score_matrix_csv(scores);
        if (category.empty()) {
          tables = cli::cmd_rank(matrix, options);
        } else {
          tables.push_back(cli::rank_table(matrix, options, category));
        }
      }
      std::cout << cli::render_tables(tables);
      if (!rank_json.empty()) mlharness::write_file(rank_json, cli::tables_to_json(tables).dump(2) + "\n");
      return 0;
    }
    if (*report) {
      const auto bundle = cli::cmd_report(report_dir);
      std::cout << cli::render_report(bundle);
      const std::string path = report_json.empty() ? (fs::path(report_dir) / "report.json").string() : report_json;
      write_or_print(path, bundle.to_json().dump(2) + "\n");
      return 0;
    }
    if (*serve) {
      serve_cfg.service.registry_root = serve_registry;
      serve_cfg.service.trajectory_dir = serve_traj;
      serve_cfg.service.env_defaults.max_steps = serve_steps;
      serve_cfg.service.env_defaults.sandbox.time_limit = serve_time;
      if (!serve_traj.empty()) fs::create_directories(serve_traj);
      cli::cmd_serve(serve_cfg);
      return 0;
    }
    if (*fixture) {
      const auto info = cli::generate_fixture_competition(fixture_out, fixture_seed, fixture_spec);
      if (print_solution) {
        std::cout << info.solution_code;
      } else {
        std::cout << info.root.string() << "\nreference score: " << mlharness::format_roundtrip(info.reference_score)
                  << "\n";
      }
      return 0;
    }
    if (*difficulty) {
      std::cout << cli::render_difficulty(cli::cmd_difficulty(mlharness::read_file(difficulty_input)));
      return 0;
    }
    if (*validate) return do_validate(validate_root);
  } catch (const mlharness::registry::LayoutError& e) {
    std::cerr << "error: " << e.what() << "\n" << cli::render_violations(e.violations());
    return 2;
  } catch (const mlharness::HarnessError& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
