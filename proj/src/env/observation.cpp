#include <cmath>
#include <cstdio>

#include "mlharness/env/env.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::env {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string seconds_text(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g s", s);
  return buf;
}

std::string bytes_text(std::uint64_t b) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.0f MiB", static_cast<double>(b) / (1024.0 * 1024.0));
  return buf;
}

std::string block(const std::string& text) {
  if (text.empty()) return "(empty)\n";
  return text.back() == '\n' ? text : text + "\n";
}

json outcome_to_json(const sandbox::ExecutionOutcome& o) {
  return {{"status", sandbox::to_string(o.status)},
          {"error_class", o.error_class ? json(sandbox::to_string(*o.error_class)) : json(nullptr)},
          {"exit_code", o.exit_code ? json(*o.exit_code) : json(nullptr)},
          {"stdout", o.stdout_text},
          {"stderr", o.stderr_text},
          {"duration", o.duration},
          {"submission_found", o.submission_found}};
}

json report_to_json(const metrics::FormatReport& r) {
  json problems = json::array();
  for (const auto& p : r.problems) {
    problems.push_back({{"code", metrics::to_string(p.code)}, {"message", p.message}});
  }
  return {{"valid", r.valid}, {"problems", problems}};
}

std::string render_execution(const ExecutionFeedback& f) {
  const auto& o = f.outcome;
  std::string out = std::string(f.check_only ? "validate_code" : "execute_code") +
                    " status: " + sandbox::to_string(o.status) + "\n";
  if (o.error_class) {
    out += "error: " + sandbox::to_string(*o.error_class) + " (" +
           sandbox::to_string(sandbox::bucket_of(*o.error_class)) + ")\n";
    if (*o.error_class == sandbox::ErrorClass::Timeout) {
      out += "time_limit=" + seconds_text(f.time_limit) + "\n";
    } else if (*o.error_class == sandbox::ErrorClass::MemoryExceeded) {
      out += "memory_limit=" + bytes_text(f.memory_limit) + "\n";
    }
  }
  out += "exit_code: " + (o.exit_code ? std::to_string(*o.exit_code) : std::string("none")) + "\n";
  out += "submission: " + std::string(o.submission_found ? "found" : "not found") + "\n";
  out += "stdout:\n" + block(o.stdout_text);
  out += "stderr:\n" + block(o.stderr_text);
  if (f.format_report && !f.format_report->problems.empty()) {
    out += "submission problems:\n";
    for (const auto& p : f.format_report->problems) {
      out += "- [" + metrics::to_string(p.code) + "] " + p.message + "\n";
    }
  }
  if (f.eval) {
    out += "metric=" + f.eval->metric_name + " (" + to_string(f.eval->direction) + ")\n";
    out += "raw_score=" + format_fixed(f.eval->raw_score, 6) + "\n";
  }
  if (f.human_rank) out += "human_rank=" + format_fixed(*f.human_rank, 6) + "\n";
  return out;
}

std::string render_history(const HistorySlice& h) {
  std::string out = "history: " + std::to_string(h.records.size()) + " record(s)\n";
  for (const auto& r : h.records) {
    const std::string action = r.action.value("action_type", std::string("?"));
    std::string kind = r.observation.value("kind", std::string("?"));
    if (r.observation.contains("outcome")) {
      const auto& o = r.observation["outcome"];
      kind = o.value("status", std::string("?"));
      if (o.contains("error_class") && o["error_class"].is_string()) {
        kind += " " + o["error_class"].get<std::string>();
      }
    }
    out += "- step " + std::to_string(r.step_index) + ": " + action + " -> " + kind;
    if (r.reward) out += ", human_rank=" + format_fixed(*r.reward, 6);
    out += "\n";
  }
  return out;
}

}  // namespace

std::string build_feedback(const Payload& payload) {
  return std::visit(
      Overloaded{
          [](const InfoBundle& b) {
            return "# Task description\n" + block(b.description) +
                   "# Sample submission (first lines)\n" + block(b.sample_submission) +
                   "# Data directory\n" + b.data_dir + "\n# Output directory\n" + b.output_dir +
                   "\nWrite the predictions to " + b.output_dir + "/submission.csv\n" +
                   "# Data structure\n" + block(b.data_structure);
          },
          [](const ExecutionFeedback& f) { return render_execution(f); },
          [](const HistorySlice& h) { return render_history(h); },
          [](const ResetAck& a) {
            return "environment reset: workspace restored, " + std::to_string(a.max_steps) +
                   " steps available\n";
          },
          [](const CustomPayload& c) { return "action " + c.action + " result:\n" + c.data.dump(2) + "\n"; },
          [](const ActionError& e) {
            return "action " + e.action + " failed: " + e.code + ": " + e.message + "\n";
          },
      },
      payload);
}

std::string Observation::kind() const {
  static const std::array<const char*, 6> names = {"info",  "execution", "history",
                                                  "reset", "custom",    "error"};
  return names[payload.index()];
}

std::optional<sandbox::ErrorClass> Observation::error_class() const {
  if (const auto* f = std::get_if<ExecutionFeedback>(&payload)) return f->outcome.error_class;
  return std::nullopt;
}

json Observation::to_json() const {
  json j = std::visit(
      Overloaded{
          [](const InfoBundle& b) -> json {
            return {{"description", b.description},
                    {"sample_submission", b.sample_submission},
                    {"data_dir", b.data_dir},
                    {"output_dir", b.output_dir},
                    {"data_structure", b.data_structure}};
          },
          [](const ExecutionFeedback& f) -> json {
            json e = nullptr;
            if (f.eval) {
              e = {{"raw_score", f.eval->raw_score},
                   {"metric", f.eval->metric_name},
                   {"direction", to_string(f.eval->direction)}};
            }
            return {{"check_only", f.check_only},
                    {"outcome", outcome_to_json(f.outcome)},
                    {"format_report", f.format_report ? report_to_json(*f.format_report) : json(nullptr)},
                    {"eval", e},
                    {"human_rank", optional_number(f.human_rank)}};
          },
          [](const HistorySlice& h) -> json {
            json records = json::array();
            for (const auto& r : h.records) records.push_back(r.to_json());
            return {{"records", records}};
          },
          [](const ResetAck& a) -> json { return {{"max_steps", a.max_steps}}; },
          [](const CustomPayload& c) -> json { return {{"action", c.action}, {"data", c.data}}; },
          [](const ActionError& e) -> json {
            return {{"action", e.action}, {"code", e.code}, {"message", e.message}};
          },
      },
      payload);
  j["kind"] = kind();
  j["feedback_text"] = feedback_text;
  return j;
}

json TrajectoryRecord::to_json() const {
  return {{"step_index", step_index},
          {"timestamp", timestamp},
          {"action", action},
          {"observation", observation},
          {"reward", optional_number(reward)},
          {"best_score_so_far", optional_number(best_score_so_far)},
          {"duration", duration}};
}

TrajectoryRecord TrajectoryRecord::from_json(const json& j) {
  try {
    TrajectoryRecord r;
    r.step_index = j.at("step_index").get<std::size_t>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.action = j.at("action");
    r.observation = j.at("observation");
    if (!j.at("reward").is_null()) r.reward = j.at("reward").get<double>();
    if (!j.at("best_score_so_far").is_null()) {
      r.best_score_so_far = j.at("best_score_so_far").get<double>();
    }
    r.duration = j.at("duration").get<double>();
    if (!r.action.is_object() || !r.action.contains("action_type")) {
      throw MalformedTrajectory("record action lacks action_type");
    }
    return r;
  } catch (const json::exception& e) {
    throw MalformedTrajectory(std::string("bad trajectory record: ") + e.what());
  }
}

json comparable(const TrajectoryRecord& record) {
  std::function<void(json&)> strip = [&](json& j) {
    if (j.is_object()) {
      j.erase("timestamp");
      j.erase("duration");
      for (auto& [key, value] : j.items()) strip(value);
    } else if (j.is_array()) {
      for (auto& v : j) strip(v);
    }
  };
  json j = record.to_json();
  strip(j);
  return j;
}

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory '" + path.string() + "'");
  std::vector<TrajectoryRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedTrajectory(path.filename().string() + " line " + std::to_string(n) + ": " +
                                e.what());
    }
    out.push_back(TrajectoryRecord::from_json(j));
  }
  return out;
}

}  // namespace mlharness::env
