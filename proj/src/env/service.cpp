#include "mlharness/env/service.hpp"

#include <algorithm>

#include "mlharness/errors.hpp"

namespace mlharness::env {

namespace {

json error_body(const std::string& error, const std::string& message) {
  return {{"error", error}, {"message", message}};
}

Response parse_failure(const std::string& reason, const std::string& message) {
  return {400, {{"error", "ParseFailure"}, {"reason", reason}, {"message", message}}};
}

Response not_found(const std::string& env_id) {
  return {404, error_body("NotFound", "no environment '" + env_id + "'")};
}

Response from_error(const HarnessError& e) {
  const std::string& code = e.code();
  int status = 500;
  if (code == "BudgetExhausted" || code == "ConcurrentStep") {
    status = 409;
  } else if (code == "InvalidArgument" || code == "UnknownAction" || code == "Malformed") {
    status = 400;
  }
  return {status, error_body(code, e.what())};
}

}  // namespace

EnvConfig apply_overrides(EnvConfig base, const json& overrides) {
  if (overrides.is_null()) return base;
  if (!overrides.is_object()) throw InvalidArgument("config must be a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    try {
      if (key == "max_steps") {
        base.max_steps = value.get<std::size_t>();
      } else if (key == "time_limit") {
        base.sandbox.time_limit = value.get<double>();
      } else if (key == "memory_limit") {
        base.sandbox.memory_limit = value.get<std::uint64_t>();
      } else if (key == "unlimited_submissions") {
        base.unlimited_submissions = value.get<bool>();
      } else if (key == "max_submissions") {
        base.max_submissions = value.get<std::size_t>();
      } else if (key == "allow_network") {
        base.sandbox.allow_network = value.get<bool>();
      } else {
        throw InvalidArgument("unknown config key '" + key + "'");
      }
    } catch (const json::exception&) {
      throw InvalidArgument("config key '" + key + "' has the wrong type");
    }
  }
  base.validate();
  return base;
}

EnvService::EnvService(ServiceConfig config) : config_(std::move(config)) {
  const auto listing = registry::list_competitions(config_.registry_root);
  for (const auto& m : listing.competitions) competitions_.emplace(m.slug, m);
}

EnvService::~EnvService() { shutdown(); }

Response EnvService::competitions() const {
  json list = json::array();
  for (const auto& [slug, m] : competitions_) {
    list.push_back({{"slug", slug}, {"metric", m.metric.name}, {"categories", m.categories}});
  }
  return {200, {{"competitions", list}}};
}

Response EnvService::create(const json& body) {
  if (!body.is_object() || !body.contains("competition_slug") || !body["competition_slug"].is_string()) {
    return {400, error_body("InvalidArgument", "body needs a string competition_slug")};
  }
  const std::string slug = body["competition_slug"].get<std::string>();
  const auto it = competitions_.find(slug);
  if (it == competitions_.end()) return {404, error_body("NotFound", "no competition '" + slug + "'")};
  try {
    EnvConfig cfg = apply_overrides(config_.env_defaults, body.value("config", json(nullptr)));
    const std::string id = new_session_id(slug);
    if (!config_.trajectory_dir.empty()) cfg.trajectory_path = config_.trajectory_dir / (id + ".jsonl");
    auto session = std::make_shared<EnvSession>(it->second, cfg, id);
    std::lock_guard lock(mutex_);
    sessions_[id] = {session, std::chrono::steady_clock::now()};
    return {200, {{"env_id", id}}};
  } catch (const HarnessError& e) {
    return from_error(e);
  }
}

std::shared_ptr<EnvSession> EnvService::find(const std::string& env_id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(env_id);
  if (it == sessions_.end()) return nullptr;
  it->second.last_used = std::chrono::steady_clock::now();
  return it->second.session;
}

Response EnvService::step(const std::string& env_id, const json& body) {
  const auto session = find(env_id);
  if (!session) return not_found(env_id);
  if (!body.is_object() || !body.contains("action_type") || !body["action_type"].is_string()) {
    return parse_failure("MissingHeader", "body needs a string action_type");
  }
  const std::string type = body["action_type"].get<std::string>();
  json args = body.value("args", json::object());
  if (!args.is_object()) return parse_failure("BadPayload", "args must be a JSON object");

  const Action action = Action::from_wire(type, args);
  if (action.kind == ActionKind::Custom) {
    const auto catalog = session->action_catalog();
    const bool known = std::any_of(catalog.begin(), catalog.end(),
                                   [&](const ActionInfo& a) { return a.name == type; });
    if (!known) return parse_failure("UnknownAction", "unknown action_type '" + type + "'");
  }
  if ((action.kind == ActionKind::ValidateCode || action.kind == ActionKind::ExecuteCode) &&
      (!args.contains("code") || !args["code"].is_string())) {
    return parse_failure("MissingPayload", type + " needs args.code");
  }
  try {
    const StepResult r = session->step(action);
    return {200,
            {{"observation", r.observation.to_json()},
             {"reward", r.reward ? json(*r.reward) : json(nullptr)},
             {"done", r.done}}};
  } catch (const HarnessError& e) {
    return from_error(e);
  }
}

Response EnvService::history(const std::string& env_id, const std::optional<std::string>& last_n) {
  const auto session = find(env_id);
  if (!session) return not_found(env_id);
  std::size_t n = session->max_steps();
  if (last_n) {
    const auto parsed = parse_int(*last_n);
    if (!parsed || *parsed < 1) return {400, error_body("InvalidArgument", "last_n must be a positive integer")};
    n = static_cast<std::size_t>(*parsed);
  }
  json records = json::array();
  for (const auto& r : session->history(n).records) records.push_back(r.to_json());
  return {200, {{"records", records}}};
}

Response EnvService::reset(const std::string& env_id) {
  const auto session = find(env_id);
  if (!session) return not_found(env_id);
  try {
    return {200, {{"observation", session->reset().to_json()}, {"reward", nullptr}, {"done", false}}};
  } catch (const HarnessError& e) {
    return from_error(e);
  }
}

Response EnvService::remove(const std::string& env_id) {
  std::shared_ptr<EnvSession> session;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(env_id);
    if (it == sessions_.end()) return not_found(env_id);
    session = it->second.session;
    sessions_.erase(it);
  }
  session->close();
  return {200, {{"deleted", env_id}}};
}

std::size_t EnvService::reap_idle() {
  const auto now = std::chrono::steady_clock::now();
  std::vector<std::shared_ptr<EnvSession>> idle;
  {
    std::lock_guard lock(mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      const double age = std::chrono::duration<double>(now - it->second.last_used).count();
      if (age >= config_.idle_timeout_seconds) {
        idle.push_back(it->second.session);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (const auto& s : idle) s->close();
  return idle.size();
}

void EnvService::shutdown() {
  std::map<std::string, Entry> all;
  {
    std::lock_guard lock(mutex_);
    all.swap(sessions_);
  }
  for (auto& [id, entry] : all) {
    try {
      entry.session->close();
    } catch (const std::exception&) {
    }
  }
}

std::size_t EnvService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

}  // namespace mlharness::env
