#include <algorithm>
#include <sstream>

#include "mlharness/agent/agent.hpp"
#include "mlharness/cli/cli.hpp"
#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::cli {

namespace {

const std::vector<std::string>& bucket_names() {
  static const std::vector<std::string> names = {
      sandbox::to_string(sandbox::FailureBucket::ExecutionFailed),
      sandbox::to_string(sandbox::FailureBucket::SubmissionNotCreated),
      sandbox::to_string(sandbox::FailureBucket::SubmissionInvalid)};
  return names;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string action_type(const env::TrajectoryRecord& r) {
  if (r.action.is_object() && r.action.contains("action_type") && r.action["action_type"].is_string()) {
    return r.action["action_type"].get<std::string>();
  }
  return "";
}

std::string action_code(const env::TrajectoryRecord& r) {
  if (!r.action.is_object() || !r.action.contains("args")) return "";
  const auto& args = r.action["args"];
  if (args.is_object() && args.contains("code") && args["code"].is_string()) return args["code"].get<std::string>();
  return "";
}

std::size_t estimated(double chars) { return (static_cast<std::size_t>(chars) + 3) / 4; }

std::string pct(double v) { return format_fixed(100.0 * v, 1) + "%"; }

}  // namespace

TrajectoryStats trajectory_stats(const std::vector<env::TrajectoryRecord>& records) {
  TrajectoryStats s;
  for (const auto& b : bucket_names()) s.error_counts[b] = 0;
  double running = 0.0;
  for (const auto& r : records) {
    if (r.step_index == 0) continue;  // reset marker
    const std::string type = action_type(r);
    const std::string code = action_code(r);
    s.history_chars += utf8_length(r.action.dump()) +
                       utf8_length(r.observation.value("feedback_text", std::string()));
    if (r.reward && (!s.best || *r.reward > *s.best)) {
      s.best = r.reward;
      s.best_solution_chars = utf8_length(code);
    }
    const bool is_execute = type == "execute_code";
    const bool is_validate = type == "validate_code";
    if (!is_execute && !is_validate) continue;
    (is_execute ? s.executes : s.validates) += 1;
    if (r.reward) running = std::max(running, *r.reward);
    s.stepwise_best.push_back(running);

    const json& obs = r.observation;
    if (!obs.contains("outcome") || !obs["outcome"].is_object()) continue;
    const json& o = obs["outcome"];
    if (o.value("status", std::string()) != "Failed") continue;
    (is_execute ? s.execution_failures : s.validation_failures) += 1;
    if (o.contains("error_class") && o["error_class"].is_string()) {
      if (const auto ec = sandbox::parse_error_class(o["error_class"].get<std::string>())) {
        s.error_counts[sandbox::to_string(sandbox::bucket_of(*ec))] += 1;
      }
    }
  }
  return s;
}

AnalyticsBundle analyze(const std::vector<TrajectoryFile>& files) {
  std::map<std::string, std::vector<const TrajectoryFile*>> by_model;
  for (const auto& f : files) by_model[f.model].push_back(&f);

  AnalyticsBundle bundle;
  for (const auto& [model, list] : by_model) {
    ModelAnalytics a;
    a.model = model;
    a.trajectories = list.size();
    for (const auto& b : bucket_names()) a.error_counts[b] = 0;

    std::map<std::string, TrajectoryStats> best_per_task;
    double history = 0.0;
    double best_solution = 0.0;
    std::size_t with_best = 0;
    for (const auto* f : list) {
      const TrajectoryStats s = trajectory_stats(f->records);
      a.executes += s.executes;
      a.validates += s.validates;
      a.execution_failures += s.execution_failures;
      a.validation_failures += s.validation_failures;
      for (const auto& [k, v] : s.error_counts) a.error_counts[k] += v;
      history += static_cast<double>(s.history_chars);
      if (s.best) {
        best_solution += static_cast<double>(s.best_solution_chars);
        ++with_best;
      }
      const auto it = best_per_task.find(f->task);
      if (it == best_per_task.end()) {
        best_per_task.emplace(f->task, s);
      } else if (s.best && (!it->second.best || *s.best > *it->second.best)) {
        it->second = s;
      }
    }
    a.tasks = best_per_task.size();

    std::size_t length = 0;
    for (const auto& [task, s] : best_per_task) length = std::max(length, s.stepwise_best.size());
    a.stepwise_best.assign(length, 0.0);
    for (const auto& [task, s] : best_per_task) {
      for (std::size_t i = 0; i < length; ++i) {
        const double v = s.stepwise_best.empty() ? 0.0
                         : i < s.stepwise_best.size() ? s.stepwise_best[i]
                                                      : s.stepwise_best.back();
        a.stepwise_best[i] += v;
      }
    }
    for (auto& v : a.stepwise_best) v /= static_cast<double>(std::max<std::size_t>(1, a.tasks));

    const std::size_t code_steps = a.executes + a.validates;
    a.execution_ratio = ratio(a.executes, code_steps);
    a.validation_failure_rate = ratio(a.validation_failures, a.validates);
    a.execution_failure_rate = ratio(a.execution_failures, a.executes);
    a.overall_failure_rate = ratio(a.validation_failures + a.execution_failures, code_steps);
    std::size_t failures = 0;
    for (const auto& [k, v] : a.error_counts) failures += v;
    for (const auto& [k, v] : a.error_counts) a.error_shares[k] = ratio(v, failures);
    a.mean_history_chars = history / static_cast<double>(a.trajectories);
    a.mean_history_tokens = static_cast<double>(estimated(a.mean_history_chars));
    a.mean_best_solution_chars = with_best ? best_solution / static_cast<double>(with_best) : 0.0;
    a.mean_best_solution_tokens = static_cast<double>(estimated(a.mean_best_solution_chars));
    bundle.models.push_back(std::move(a));
  }
  return bundle;
}

json AnalyticsBundle::to_json() const {
  json out = json::array();
  for (const auto& a : models) {
    out.push_back({{"model", a.model},
                   {"trajectories", a.trajectories},
                   {"tasks", a.tasks},
                   {"stepwise_best", a.stepwise_best},
                   {"executes", a.executes},
                   {"validates", a.validates},
                   {"execution_ratio", a.execution_ratio},
                   {"validation_failures", a.validation_failures},
                   {"execution_failures", a.execution_failures},
                   {"validation_failure_rate", a.validation_failure_rate},
                   {"execution_failure_rate", a.execution_failure_rate},
                   {"overall_failure_rate", a.overall_failure_rate},
                   {"error_counts", a.error_counts},
                   {"error_shares", a.error_shares},
                   {"mean_history_chars", a.mean_history_chars},
                   {"mean_history_tokens", a.mean_history_tokens},
                   {"mean_best_solution_chars", a.mean_best_solution_chars},
                   {"mean_best_solution_tokens", a.mean_best_solution_tokens}});
  }
  return {{"models", out}};
}

std::vector<TrajectoryFile> load_trajectory_dir(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw MalformedTrajectory("not a directory: " + dir.string());
  fs::path root = dir;
  if (fs::is_directory(dir / "trajectories", ec)) root = dir / "trajectories";

  std::vector<fs::path> paths;
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file() && it->path().extension() == ".jsonl") paths.push_back(it->path());
  }
  if (ec) throw MalformedTrajectory("cannot list " + root.string() + ": " + ec.message());
  if (paths.empty()) throw MalformedTrajectory("no trajectory files under " + dir.string());
  std::sort(paths.begin(), paths.end());

  std::vector<TrajectoryFile> files;
  for (const auto& p : paths) {
    std::vector<std::string> parts;
    for (const auto& c : fs::relative(p, root)) parts.push_back(c.string());
    TrajectoryFile f;
    f.model = parts.size() >= 2 ? parts[0] : "default";
    f.task = parts.size() >= 3 ? parts[1] : p.stem().string();
    f.records = env::read_trajectory(p);
    files.push_back(std::move(f));
  }
  return files;
}

AnalyticsBundle cmd_report(const fs::path& trajectory_dir) { return analyze(load_trajectory_dir(trajectory_dir)); }

std::string render_report(const AnalyticsBundle& bundle) {
  std::ostringstream out;
  out << "## Actions and failures\n"
      << "model | trajectories | executes | validates | execution ratio | validation fail | execution fail | "
         "overall fail\n";
  for (const auto& a : bundle.models) {
    out << a.model << " | " << a.trajectories << " | " << a.executes << " | " << a.validates << " | "
        << format_fixed(a.execution_ratio, 3) << " | " << pct(a.validation_failure_rate) << " | "
        << pct(a.execution_failure_rate) << " | " << pct(a.overall_failure_rate) << "\n";
  }
  out << "\n## Error types\nmodel";
  for (const auto& b : bucket_names()) out << " | " << b;
  out << "\n";
  for (const auto& a : bundle.models) {
    out << a.model;
    for (const auto& b : bucket_names()) {
      out << " | " << a.error_counts.at(b) << " (" << pct(a.error_shares.at(b)) << ")";
    }
    out << "\n";
  }
  out << "\n## Lengths\nmodel | history chars | history tokens | best solution chars | best solution tokens\n";
  for (const auto& a : bundle.models) {
    out << a.model << " | " << format_fixed(a.mean_history_chars, 1) << " | "
        << format_fixed(a.mean_history_tokens, 0) << " | " << format_fixed(a.mean_best_solution_chars, 1) << " | "
        << format_fixed(a.mean_best_solution_tokens, 0) << "\n";
  }
  out << "\n## Best HumanRank by code step\n";
  for (const auto& a : bundle.models) {
    out << a.model << ":";
    for (double v : a.stepwise_best) out << " " << format_fixed(v, 4);
    out << "\n";
  }
  return out.str();
}

}  // namespace mlharness::cli
