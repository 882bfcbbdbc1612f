#include <algorithm>
#include <iostream>
#include <mutex>
#include <set>

#include "mlharness/cli/cli.hpp"
#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"
#include "mlharness/ini.hpp"

namespace mlharness::cli {

namespace {

bool valid_name(const std::string& s) {
  return !s.empty() && s != "." && s != ".." && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
  if (t == "false" || t == "no" || t == "0" || t == "off") return false;
  throw InvalidArgument(key + " must be a boolean, got '" + v + "'");
}

double parse_number(const std::string& key, const std::string& v) {
  const auto d = parse_double(trim(v));
  if (!d) throw InvalidArgument(key + " must be a number, got '" + v + "'");
  return *d;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  const auto n = parse_int(trim(v));
  if (!n || *n < 0) throw InvalidArgument(key + " must be a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(*n);
}

// Bytes, optionally suffixed K, M or G (binary multiples).
std::uint64_t parse_bytes(const std::string& key, const std::string& v) {
  std::string t = trim(v);
  std::uint64_t mult = 1;
  if (!t.empty()) {
    const char s = static_cast<char>(std::toupper(static_cast<unsigned char>(t.back())));
    if (s == 'K' || s == 'M' || s == 'G') {
      mult = s == 'K' ? 1024ULL : s == 'M' ? 1024ULL * 1024 : 1024ULL * 1024 * 1024;
      t.pop_back();
    }
  }
  return static_cast<std::uint64_t>(parse_count(key, t)) * mult;
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& part : split(v, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& v) {
  const fs::path p(trim(v));
  return p.is_absolute() ? p : base / p;
}

void check_keys(const std::string& section, const std::map<std::string, std::string>& values,
                const std::set<std::string>& known) {
  for (const auto& [k, v] : values) {
    if (!known.count(k)) throw InvalidArgument("unknown key '" + k + "' in [" + section + "]");
  }
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

// Raw score of the record that earned the best reward.
std::optional<double> best_raw(const std::vector<env::TrajectoryRecord>& records) {
  std::optional<double> reward;
  std::optional<double> raw;
  for (const auto& r : records) {
    if (!r.reward || (reward && *r.reward <= *reward)) continue;
    const json& obs = r.observation;
    if (!obs.contains("eval") || !obs["eval"].is_object()) continue;
    reward = r.reward;
    raw = obs["eval"]["raw_score"].get<double>();
  }
  return raw;
}

fs::path cell_path(const fs::path& out, const std::string& model, const std::string& task) {
  return out / "cells" / model / (task + ".json");
}

CellResult run_cell(const RunConfig& config, const registry::CompetitionManifest& manifest,
                    const EndpointSetting& setting) {
  CellResult cell;
  cell.model = setting.endpoint.name;
  cell.task = manifest.slug;
  cell.direction = manifest.metric.direction;
  cell.categories = manifest.categories;
  const fs::path traj_dir = config.output_dir / "trajectories" / cell.model / cell.task;
  const fs::path usage_dir = config.output_dir / "usage" / cell.model / cell.task;
  try {
    fs::create_directories(traj_dir);
    fs::create_directories(usage_dir);
    const agent::SessionFactory sessions = [&](std::size_t i) {
      env::EnvConfig cfg = config.env;
      cfg.trajectory_path = traj_dir / ("run_" + std::to_string(i) + ".jsonl");
      std::error_code ec;
      fs::remove(cfg.trajectory_path, ec);
      return env::create_env(manifest, cfg);
    };
    const agent::ClientFactory clients = [&](std::size_t) -> std::unique_ptr<agent::ChatClient> {
      if (setting.script) return agent::ScriptedClient::from_file(setting.script->string());
      return std::make_unique<agent::HttpChatClient>();
    };
    const agent::BestOfK result =
        agent::best_of_k(sessions, clients, setting.endpoint, config.prompts, config.k, config.agent);
    for (std::size_t i = 0; i < result.episodes.size(); ++i) {
      const auto& e = result.episodes[i];
      write_file((usage_dir / ("run_" + std::to_string(i) + ".csv")).string(), agent::usage_to_csv(e.usage));
      cell.episodes.push_back({{"episode", i},
                               {"end", agent::to_string(e.end)},
                               {"env_steps", e.env_steps},
                               {"parse_failures", e.parse_failures},
                               {"best_human_rank", optional_json(e.best_human_rank)}});
    }
    cell.best_episode = result.best_index;
    const auto& best = result.best();
    cell.score = best_raw(best.trajectory);
    if (cell.score) cell.human_rank = best.best_human_rank;
  } catch (const HarnessError& e) {
    cell.error = e.code() + ": " + e.what();
    cell.score.reset();
    cell.human_rank.reset();
  } catch (const std::exception& e) {
    cell.error = e.what();
    cell.score.reset();
    cell.human_rank.reset();
  }
  return cell;
}

}  // namespace

json CellResult::to_json() const {
  return {{"model", model},
          {"task", task},
          {"direction", to_string(direction)},
          {"categories", categories},
          {"feasible", feasible()},
          {"score", optional_json(score)},
          {"human_rank", optional_json(human_rank)},
          {"best_episode", best_episode},
          {"error", error},
          {"episodes", episodes}};
}

CellResult CellResult::from_json(const json& j) {
  try {
    CellResult c;
    c.model = j.at("model").get<std::string>();
    c.task = j.at("task").get<std::string>();
    const auto dir = parse_direction(j.at("direction").get<std::string>());
    if (!dir) throw Malformed("bad direction in cell result");
    c.direction = *dir;
    c.categories = j.value("categories", std::vector<std::string>{});
    c.score = optional_from(j, "score");
    c.human_rank = optional_from(j, "human_rank");
    c.best_episode = j.value("best_episode", std::size_t{0});
    c.error = j.value("error", std::string());
    for (const auto& e : j.value("episodes", json::array())) c.episodes.push_back(e);
    return c;
  } catch (const json::exception& e) {
    throw Malformed(std::string("bad cell result: ") + e.what());
  }
}

RunConfig RunConfig::load(const fs::path& path) {
  return parse(read_file(path.string()), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

RunConfig RunConfig::parse(const std::string& text, const fs::path& base_dir) {
  const IniDocument doc = IniDocument::parse(text);
  RunConfig c;
  c.output_dir = base_dir / "runs";
  for (const auto& name : doc.section_names()) {
    if (name.empty() || name == "run" || name == "env" || name == "agent" || name == "prompts") continue;
    if (!starts_with(name, "endpoint:")) throw InvalidArgument("unknown section [" + name + "]");
  }
  if (doc.has_section("")) {
    check_keys("", doc.section(""), {});
  }

  if (doc.has_section("run")) {
    const auto& run = doc.section("run");
    check_keys("run", run, {"registry", "competitions", "categories", "k", "workers", "output_dir"});
    if (run.count("registry")) c.registry_root = resolve(base_dir, run.at("registry"));
    if (run.count("competitions")) c.competitions = parse_list(run.at("competitions"));
    if (run.count("categories")) c.categories = parse_list(run.at("categories"));
    if (run.count("k")) c.k = parse_count("k", run.at("k"));
    if (run.count("workers")) c.workers = parse_count("workers", run.at("workers"));
    if (run.count("output_dir")) c.output_dir = resolve(base_dir, run.at("output_dir"));
  }

  if (doc.has_section("env")) {
    const auto& e = doc.section("env");
    check_keys("env", e,
               {"max_steps", "time_limit", "memory_limit", "allow_network", "isolation", "unlimited_submissions",
                "max_submissions", "syntax_check", "run_command", "workspace_dir", "stream_cap"});
    auto& sb = c.env.sandbox;
    if (e.count("max_steps")) c.env.max_steps = parse_count("max_steps", e.at("max_steps"));
    if (e.count("time_limit")) sb.time_limit = parse_number("time_limit", e.at("time_limit"));
    if (e.count("memory_limit")) sb.memory_limit = parse_bytes("memory_limit", e.at("memory_limit"));
    if (e.count("stream_cap")) sb.stream_cap = parse_bytes("stream_cap", e.at("stream_cap"));
    if (e.count("allow_network")) sb.allow_network = parse_bool("allow_network", e.at("allow_network"));
    if (e.count("isolation")) {
      const auto iso = sandbox::parse_isolation(trim(e.at("isolation")));
      if (!iso) throw InvalidArgument("isolation must be auto, landlock or none");
      sb.isolation = *iso;
    }
    if (e.count("unlimited_submissions")) {
      c.env.unlimited_submissions = parse_bool("unlimited_submissions", e.at("unlimited_submissions"));
    }
    if (e.count("max_submissions")) c.env.max_submissions = parse_count("max_submissions", e.at("max_submissions"));
    if (e.count("syntax_check")) sb.syntax_check = parse_bool("syntax_check", e.at("syntax_check"));
    if (e.count("run_command")) sb.run_command = trim(e.at("run_command"));
    if (e.count("workspace_dir")) sb.base_dir = resolve(base_dir, e.at("workspace_dir"));
  }

  if (doc.has_section("agent")) {
    const auto& a = doc.section("agent");
    check_keys("agent", a,
               {"max_parse_retries", "max_messages", "max_input_tokens", "retry_attempts", "retry_backoff",
                "retry_multiplier"});
    if (a.count("max_parse_retries")) {
      c.agent.max_parse_retries = parse_count("max_parse_retries", a.at("max_parse_retries"));
    }
    if (a.count("max_messages")) c.agent.max_messages = parse_count("max_messages", a.at("max_messages"));
    if (a.count("max_input_tokens")) {
      c.agent.max_input_tokens = parse_count("max_input_tokens", a.at("max_input_tokens"));
    }
    if (a.count("retry_attempts")) c.agent.retry.attempts = parse_count("retry_attempts", a.at("retry_attempts"));
    if (a.count("retry_backoff")) {
      c.agent.retry.initial_backoff_seconds = parse_number("retry_backoff", a.at("retry_backoff"));
    }
    if (a.count("retry_multiplier")) {
      c.agent.retry.multiplier = parse_number("retry_multiplier", a.at("retry_multiplier"));
    }
  }

  if (doc.has_section("prompts")) {
    const auto& p = doc.section("prompts");
    check_keys("prompts", p, {"system_instruction", "error_prompt", "reflection_prompt", "parse_error_prompt"});
    // Values name template files.
    const std::pair<const char*, std::string*> slots[] = {
        {"system_instruction", &c.prompts.system_instruction},
        {"error_prompt", &c.prompts.error_prompt},
        {"reflection_prompt", &c.prompts.reflection_prompt},
        {"parse_error_prompt", &c.prompts.parse_error_prompt}};
    for (const auto& [key, slot] : slots) {
      if (p.count(key)) *slot = read_file(resolve(base_dir, p.at(key)).string());
    }
  }

  for (const auto& name : doc.section_names()) {
    if (!starts_with(name, "endpoint:")) continue;
    const auto& s = doc.section(name);
    check_keys(name, s,
               {"script", "base_url", "model", "temperature", "top_p", "timeout", "max_output_tokens",
                "api_key_env", "prompt_price", "completion_price"});
    EndpointSetting e;
    e.endpoint.name = trim(name.substr(std::string("endpoint:").size()));
    if (s.count("script")) e.script = resolve(base_dir, s.at("script"));
    if (s.count("base_url")) e.endpoint.base_url = trim(s.at("base_url"));
    e.endpoint.model = s.count("model") ? trim(s.at("model")) : e.endpoint.name;
    if (s.count("temperature")) e.endpoint.temperature = parse_number("temperature", s.at("temperature"));
    if (s.count("top_p")) e.endpoint.top_p = parse_number("top_p", s.at("top_p"));
    if (s.count("timeout")) e.endpoint.request_timeout_seconds = parse_number("timeout", s.at("timeout"));
    if (s.count("max_output_tokens")) {
      e.endpoint.max_output_tokens = parse_count("max_output_tokens", s.at("max_output_tokens"));
    }
    if (s.count("api_key_env")) e.endpoint.api_key_env = trim(s.at("api_key_env"));
    if (s.count("prompt_price")) e.endpoint.prompt_token_price = parse_number("prompt_price", s.at("prompt_price"));
    if (s.count("completion_price")) {
      e.endpoint.completion_token_price = parse_number("completion_price", s.at("completion_price"));
    }
    c.endpoints.push_back(std::move(e));
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (registry_root.empty()) throw InvalidArgument("[run] registry is required");
  if (endpoints.empty()) throw InvalidArgument("at least one [endpoint:<name>] section is required");
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (workers < 1) throw InvalidArgument("workers must be at least 1");
  if (output_dir.empty()) throw InvalidArgument("output_dir is required");
  std::set<std::string> names;
  for (const auto& e : endpoints) {
    if (!valid_name(e.endpoint.name)) throw InvalidArgument("bad endpoint name '" + e.endpoint.name + "'");
    if (!names.insert(e.endpoint.name).second) throw InvalidArgument("duplicate endpoint '" + e.endpoint.name + "'");
    if (!e.script && e.endpoint.base_url.empty()) {
      throw InvalidArgument("endpoint '" + e.endpoint.name + "' needs base_url or script");
    }
    e.endpoint.validate();
  }
  env.validate();
  prompts.validate();
}

rank::ScoreMatrix assemble_matrix(const std::vector<CellResult>& cells, const std::vector<std::string>& models) {
  rank::ScoreMatrix m;
  m.models = models;
  std::map<std::string, std::pair<Direction, std::vector<std::string>>> tasks;
  for (const auto& c : cells) tasks.emplace(c.task, std::pair{c.direction, c.categories});
  for (const auto& [task, info] : tasks) {
    m.tasks.push_back(task);
    m.directions.push_back(info.first);
    m.categories.push_back(info.second);
  }
  m.scores.assign(m.tasks.size(), std::vector<std::optional<double>>(models.size()));
  m.human_ranks.assign(m.tasks.size(), std::vector<std::optional<double>>(models.size()));
  for (const auto& c : cells) {
    const auto t = static_cast<std::size_t>(
        std::find(m.tasks.begin(), m.tasks.end(), c.task) - m.tasks.begin());
    const auto mi = std::find(models.begin(), models.end(), c.model);
    if (mi == models.end()) continue;
    const auto j = static_cast<std::size_t>(mi - models.begin());
    m.scores[t][j] = c.score;
    m.human_ranks[t][j] = c.human_rank;
  }
  m.validate();
  return m;
}

RunSummary cmd_run(const RunConfig& config) {
  config.validate();
  const auto listing = registry::list_competitions(config.registry_root);
  std::map<std::string, const registry::CompetitionManifest*> by_slug;
  for (const auto& m : listing.competitions) by_slug[m.slug] = &m;
  for (const auto& f : listing.failures) {
    std::cerr << "warning: skipping invalid competition '" << f.slug << "'\n";
  }

  std::vector<const registry::CompetitionManifest*> selected;
  if (!config.competitions.empty()) {
    for (const auto& slug : config.competitions) {
      const auto it = by_slug.find(slug);
      if (it == by_slug.end()) throw InvalidArgument("unknown competition '" + slug + "'");
      selected.push_back(it->second);
    }
  } else {
    for (const auto& [slug, m] : by_slug) selected.push_back(m);
  }
  if (!config.categories.empty()) {
    std::erase_if(selected, [&](const registry::CompetitionManifest* m) {
      return std::none_of(m->categories.begin(), m->categories.end(), [&](const std::string& c) {
        return std::find(config.categories.begin(), config.categories.end(), c) != config.categories.end();
      });
    });
  }
  std::sort(selected.begin(), selected.end(),
            [](const auto* a, const auto* b) { return a->slug < b->slug; });
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  if (selected.empty()) throw InvalidArgument("no competitions selected");

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.output_dir.string() + ": " + ec.message());

  struct Job {
    const registry::CompetitionManifest* manifest;
    const EndpointSetting* endpoint;
    fs::path result_path;
  };
  RunSummary summary;
  std::vector<Job> jobs;
  for (const auto& e : config.endpoints) {
    for (const auto* m : selected) {
      const fs::path p = cell_path(config.output_dir, e.endpoint.name, m->slug);
      if (fs::exists(p)) {
        summary.cells.push_back(CellResult::from_json(json::parse(read_file(p.string()))));
        ++summary.skipped;
      } else {
        jobs.push_back({m, &e, p});
      }
    }
  }

  std::vector<CellResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      results[i] = run_cell(config, *jobs[i].manifest, *jobs[i].endpoint);
      fs::create_directories(jobs[i].result_path.parent_path());
      write_file(jobs[i].result_path.string(), results[i].to_json().dump(2) + "\n");
    }
  };
  const std::size_t n_threads = std::min(config.workers, std::max<std::size_t>(1, jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  summary.executed = jobs.size();
  for (auto& r : results) summary.cells.push_back(std::move(r));

  std::vector<std::string> models;
  for (const auto& e : config.endpoints) models.push_back(e.endpoint.name);
  summary.matrix = assemble_matrix(summary.cells, models);
  summary.score_matrix_path = config.output_dir / "scores.csv";
  write_file(summary.score_matrix_path.string(), rank::score_matrix_to_csv(summary.matrix));
  return summary;
}

}  // namespace mlharness::cli
