#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <csignal>
#include <iostream>

#include "mlharness/cli/cli.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::cli {

namespace {

void send(httplib::Response& res, const env::Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception&) {
    send(res, {400, {{"error", "ParseFailure"}, {"reason", "BadPayload"}, {"message", "body is not JSON"}}});
    return std::nullopt;
  }
}

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

}  // namespace

struct StepServer::Impl {
  httplib::Server server;
  std::mutex mutex;
  std::condition_variable cv;
};

StepServer::StepServer(ServeConfig config)
    : config_(std::move(config)),
      service_(std::make_unique<env::EnvService>(config_.service)),
      impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  auto* svc = service_.get();
  s.Get("/competitions", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->competitions()); });
  s.Post("/envs", [svc](const httplib::Request& req, httplib::Response& res) {
    if (const auto body = parse_body(req, res)) send(res, svc->create(*body));
  });
  s.Post(R"(/envs/([^/]+)/step)", [svc](const httplib::Request& req, httplib::Response& res) {
    if (const auto body = parse_body(req, res)) send(res, svc->step(req.matches[1], *body));
  });
  s.Get(R"(/envs/([^/]+)/history)", [svc](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> last_n;
    if (req.has_param("last_n")) last_n = req.get_param_value("last_n");
    send(res, svc->history(req.matches[1], last_n));
  });
  s.Post(R"(/envs/([^/]+)/reset)", [svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc->reset(req.matches[1]));
  });
  s.Delete(R"(/envs/([^/]+))", [svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc->remove(req.matches[1]));
  });
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(json{{"error", "NotFound"}, {"message", "no such route"}}.dump(), "application/json");
    }
  });
}

StepServer::~StepServer() { stop(); }

int StepServer::start() {
  if (running_) return port_;
  auto& s = impl_->server;
  if (config_.port == 0) {
    port_ = s.bind_to_any_port(config_.host);
    if (port_ <= 0) throw BindError("cannot bind " + config_.host);
  } else {
    if (!s.bind_to_port(config_.host, config_.port)) {
      throw BindError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    port_ = config_.port;
  }
  running_ = true;
  listener_ = std::thread([this] { impl_->server.listen_after_bind(); });
  reaper_ = std::thread([this] {
    std::unique_lock lock(impl_->mutex);
    const auto interval = std::chrono::duration<double>(config_.reap_interval_seconds);
    while (running_) {
      impl_->cv.wait_for(lock, interval, [this] { return !running_; });
      if (running_) service_->reap_idle();
    }
  });
  return port_;
}

void StepServer::stop() {
  if (!running_.exchange(false)) return;
  impl_->server.stop();
  impl_->cv.notify_all();
  if (listener_.joinable()) listener_.join();
  if (reaper_.joinable()) reaper_.join();
  service_->shutdown();
}

void cmd_serve(const ServeConfig& config) {
  StepServer server(config);
  const int port = server.start();
  std::cerr << "serving on " << config.host << ":" << port << "\n";
  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
}

}  // namespace mlharness::cli
