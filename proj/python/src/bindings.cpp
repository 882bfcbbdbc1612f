// Thin bindings; structured results cross the boundary as JSON text.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

#include "mlharness/cli/cli.hpp"
#include "mlharness/common.hpp"
#include "mlharness/env/env.hpp"
#include "mlharness/errors.hpp"
#include "mlharness/metrics/metric_registry.hpp"
#include "mlharness/rank/rank.hpp"
#include "mlharness/registry/task_registry.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace mlharness;
using nlohmann::json;

namespace {

// Owned reference, kept for the life of the process.
PyObject* g_error = nullptr;

Direction direction_arg(const std::string& text) {
  const auto d = parse_direction(text);
  if (!d) throw InvalidArgument("unknown direction '" + text + "'");
  return *d;
}

registry::LeaderboardSnapshot snapshot(std::vector<double> entries, Direction d) {
  if (d == Direction::HigherBetter) {
    std::sort(entries.rbegin(), entries.rend());
  } else {
    std::sort(entries.begin(), entries.end());
  }
  return {std::move(entries), d, registry::BoardSource::Public};
}

json violations_json(const std::vector<registry::LayoutViolation>& vs) {
  json out = json::array();
  for (const auto& v : vs) {
    out.push_back({{"path", v.path}, {"kind", registry::to_string(v.kind)}, {"detail", v.detail}, {"remedy", v.remedy()}});
  }
  return out;
}

class PyEnv {
 public:
  PyEnv(const fs::path& competition, const fs::path& workspace_dir, std::size_t max_steps, double time_limit,
        const fs::path& trajectory) {
    env::EnvConfig cfg;
    cfg.max_steps = max_steps;
    cfg.sandbox.base_dir = workspace_dir;
    cfg.sandbox.time_limit = time_limit;
    cfg.trajectory_path = trajectory;
    session_ = env::create_env(registry::load_competition(competition), cfg);
  }

  std::string step(const std::string& action_json) {
    const auto action = env::Action::from_json(json::parse(action_json));
    env::StepResult r;
    {
      py::gil_scoped_release release;
      r = session_->step(action);
    }
    json out = {{"observation", r.observation.to_json()}, {"done", r.done}};
    out["reward"] = r.reward ? json(*r.reward) : json(nullptr);
    return out.dump();
  }

  std::string reset() {
    py::gil_scoped_release release;
    return session_->reset().to_json().dump();
  }

  std::string trajectory() const {
    json out = json::array();
    for (const auto& rec : session_->archive()) out.push_back(rec.to_json());
    return out.dump();
  }

  std::size_t step_count() const { return session_->step_count(); }
  std::size_t max_steps() const { return session_->max_steps(); }
  bool done() const { return session_->done(); }
  std::optional<double> best_human_rank() const { return session_->best_human_rank(); }
  void close() { session_->close(); }

 private:
  std::unique_ptr<env::EnvSession> session_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mlharness core bindings";

  g_error = py::exception<HarnessError>(m, "HarnessError", PyExc_RuntimeError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const HarnessError& e) {
      py::object exc = py::reinterpret_borrow<py::object>(g_error)(std::string(e.code()) + ": " + e.what());
      exc.attr("code") = e.code();
      PyErr_SetObject(g_error, exc.ptr());
    }
  });

  m.def(
      "human_rank",
      [](double score, std::vector<double> board, const std::string& direction) {
        return rank::human_rank(score, snapshot(std::move(board), direction_arg(direction)));
      },
      py::arg("score"), py::arg("leaderboard"), py::arg("direction") = "higher_better");

  m.def(
      "combined_reward",
      [](double score, std::optional<std::vector<double>> pub, std::optional<std::vector<double>> priv,
         const std::string& direction) {
        const Direction d = direction_arg(direction);
        std::optional<registry::LeaderboardSnapshot> a, b;
        if (pub) a = snapshot(*pub, d);
        if (priv) b = snapshot(*priv, d);
        return rank::combined_reward(score, a, b);
      },
      py::arg("score"), py::arg("public"), py::arg("private"), py::arg("direction") = "higher_better");

  m.def("builtin_metrics", &metrics::builtin_metrics);

  m.def(
      "evaluate",
      [](const fs::path& competition, const fs::path& submission) {
        const auto manifest = registry::load_competition(competition);
        const auto answers = metrics::SubmissionTable::load(manifest.answer_path().string());
        const auto sub = metrics::SubmissionTable::load(submission.string());
        return metrics::evaluate(manifest.metric, sub, answers).raw_score;
      },
      py::arg("competition"), py::arg("submission"));

  m.def(
      "generate_fixture",
      [](const fs::path& parent, std::uint64_t seed, const std::string& metric) {
        cli::FixtureSpec spec;
        spec.metric = metric;
        const auto info = cli::generate_fixture_competition(parent, seed, spec);
        return json{{"root", info.root.string()},
                    {"slug", info.slug},
                    {"solution_code", info.solution_code},
                    {"reference_score", info.reference_score}}
            .dump();
      },
      py::arg("parent"), py::arg("seed") = 7, py::arg("metric") = "rmse");

  m.def(
      "validate_layout", [](const fs::path& root) { return violations_json(registry::validate_layout(root)).dump(); },
      py::arg("root"));

  m.def(
      "rank_tables",
      [](const std::string& scores_csv, std::uint64_t seed, std::size_t rounds, bool literal_aup) {
        cli::RankOptions options;
        options.elo.seed = seed;
        options.elo.bootstrap_rounds = rounds;
        options.aup.literal_lower_bound = literal_aup;
        const auto tables = cli::cmd_rank(rank::parse_score_matrix_csv(scores_csv), options);
        return json{{"tables", cli::tables_to_json(tables)}, {"text", cli::render_tables(tables)}}.dump();
      },
      py::arg("scores_csv"), py::arg("seed") = rank::EloConfig{}.seed,
      py::arg("rounds") = rank::EloConfig{}.bootstrap_rounds, py::arg("literal_aup") = false);

  m.def(
      "difficulty",
      [](const std::string& csv_text) {
        json out = json::array();
        for (const auto& r : cli::cmd_difficulty(csv_text)) {
          out.push_back({{"task", r.task}, {"avg_human_rank", r.avg_human_rank}, {"category", r.category}});
        }
        return out.dump();
      },
      py::arg("csv_text"));

  m.def(
      "report", [](const fs::path& dir) { return cli::cmd_report(dir).to_json().dump(); }, py::arg("directory"));

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const fs::path&, const fs::path&, std::size_t, double, const fs::path&>(), py::arg("competition"),
           py::arg("workspace_dir"), py::arg("max_steps") = 15, py::arg("time_limit") = sandbox::kDefaultTimeLimit,
           py::arg("trajectory") = fs::path())
      .def("step", &PyEnv::step, py::arg("action_json"))
      .def("reset", &PyEnv::reset)
      .def("trajectory", &PyEnv::trajectory)
      .def_property_readonly("step_count", &PyEnv::step_count)
      .def_property_readonly("max_steps", &PyEnv::max_steps)
      .def_property_readonly("done", &PyEnv::done)
      .def_property_readonly("best_human_rank", &PyEnv::best_human_rank)
      .def("close", &PyEnv::close);
}
