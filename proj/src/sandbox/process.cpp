#include "process.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "mlharness/errors.hpp"

namespace mlharness::sandbox::detail {

namespace {

constexpr auto kPollInterval = std::chrono::milliseconds(50);
constexpr auto kDrainWindow = std::chrono::milliseconds(500);

struct Stream {
  int fd = -1;
  std::string data;
  std::size_t total = 0;
};

void read_available(Stream& s, std::size_t cap) {
  std::array<char, 16384> buf{};
  for (;;) {
    const ssize_t n = ::read(s.fd, buf.data(), buf.size());
    if (n > 0) {
      const auto got = static_cast<std::size_t>(n);
      if (s.data.size() < cap) s.data.append(buf.data(), std::min(got, cap - s.data.size()));
      s.total += got;
      continue;
    }
    if (n == 0) {
      ::close(s.fd);
      s.fd = -1;
    }
    return;  // EAGAIN or error
  }
}

// Resident set of every process in group `pgid`, in bytes.
std::uint64_t group_rss(pid_t pgid) {
  static const long page = ::sysconf(_SC_PAGESIZE);
  std::uint64_t total = 0;
  DIR* proc = ::opendir("/proc");
  if (!proc) return 0;
  while (const dirent* e = ::readdir(proc)) {
    if (e->d_name[0] < '0' || e->d_name[0] > '9') continue;
    std::ifstream stat(std::string("/proc/") + e->d_name + "/stat");
    std::string line;
    if (!std::getline(stat, line)) continue;
    const auto close_paren = line.rfind(')');
    if (close_paren == std::string::npos) continue;
    // Fields after the command name: state ppid pgrp ... rss is field 24.
    std::istringstream rest(line.substr(close_paren + 2));
    std::string field;
    long pgrp = -1;
    long rss = 0;
    for (int i = 3; i <= 24 && rest >> field; ++i) {
      if (i == 5) pgrp = std::strtol(field.c_str(), nullptr, 10);
      if (i == 24) rss = std::strtol(field.c_str(), nullptr, 10);
    }
    if (pgrp == pgid && rss > 0) total += static_cast<std::uint64_t>(rss) * page;
  }
  ::closedir(proc);
  return total;
}

[[noreturn]] void child_fail(int fd, const char* what) {
  const int err = errno;
  (void)!::write(fd, what, std::strlen(what));
  (void)!::write(fd, ": ", 2);
  const char* msg = std::strerror(err);
  (void)!::write(fd, msg, std::strlen(msg));
  (void)!::write(fd, "\n", 1);
  ::_exit(126);
}

}  // namespace

std::string truncate_stream(const std::string& data, std::size_t total_bytes, std::size_t cap) {
  if (total_bytes <= cap) return data;
  return data.substr(0, cap) + "\n[output truncated: " + std::to_string(total_bytes - cap) +
         " more bytes]\n";
}

RawProcessResult run_process(const ProcessSpec& spec) {
  int out_pipe[2];
  int err_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    throw IoError(std::string("pipe: ") + std::strerror(errno));
  }

  // Everything the child touches is prepared before fork.
  std::vector<char*> envp;
  for (const auto& e : spec.env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);
  const std::string cwd = spec.cwd.string();
  char sh[] = "/bin/sh";
  char dash_c[] = "-c";
  std::array<char*, 4> argv{sh, dash_c, const_cast<char*>(spec.command.c_str()), nullptr};

  const auto start = Clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    throw IoError(std::string("fork: ") + std::strerror(errno));
  }

  if (pid == 0) {
    ::setpgid(0, 0);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull < 0 || ::dup2(devnull, 0) < 0 || ::dup2(out_pipe[1], 1) < 0 ||
        ::dup2(err_pipe[1], 2) < 0) {
      child_fail(err_pipe[1], "redirect");
    }
    if (::chdir(cwd.c_str()) != 0) child_fail(2, "chdir");
    if (spec.isolate_network) (void)::unshare(CLONE_NEWNET);
    struct rlimit no_core {0, 0};
    ::setrlimit(RLIMIT_CORE, &no_core);
    if (spec.ruleset_fd >= 0 && !restrict_self(spec.ruleset_fd)) child_fail(2, "landlock");
    if (::syscall(436 /* close_range */, 3U, ~0U, 0U) != 0) {
      for (int fd = 3; fd < 1024; ++fd) ::close(fd);
    }
    ::execve(argv[0], argv.data(), envp.data());
    child_fail(2, "execve");
  }

  ::setpgid(pid, pid);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  Stream out;
  out.fd = out_pipe[0];
  Stream err;
  err.fd = err_pipe[0];
  for (int fd : {out.fd, err.fd}) ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);

  RawProcessResult result;
  bool exited = false;
  bool killed = false;
  int status = 0;
  rusage usage{};
  Clock::time_point end = start;
  Clock::time_point drain_until{};

  for (;;) {
    std::array<pollfd, 2> fds{};
    nfds_t n = 0;
    for (Stream* s : {&out, &err}) {
      if (s->fd >= 0) fds[n++] = {s->fd, POLLIN, 0};
    }
    auto wait = kPollInterval;
    if (!exited) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(spec.deadline - Clock::now());
      wait = std::clamp(left, std::chrono::milliseconds(1), kPollInterval);
    }
    if (n > 0) {
      ::poll(fds.data(), n, static_cast<int>(wait.count()));
    } else if (!exited) {
      std::this_thread::sleep_for(wait);
    }
    for (Stream* s : {&out, &err}) {
      if (s->fd >= 0) read_available(*s, spec.stream_cap);
    }

    if (!exited) {
      const pid_t r = ::wait4(pid, &status, WNOHANG, &usage);
      if (r == pid) {
        exited = true;
        end = Clock::now();
        // Stray descendants must not outlive the run.
        ::killpg(pid, SIGKILL);
        drain_until = end + kDrainWindow;
      }
    }
    if (exited) {
      if ((out.fd < 0 && err.fd < 0) || Clock::now() >= drain_until) break;
      continue;
    }

    const auto now = Clock::now();
    if (now >= spec.deadline) {
      result.termination = Termination::TimedOut;
      killed = true;
    } else if (spec.memory_limit > 0 && group_rss(pid) > spec.memory_limit) {
      result.termination = Termination::MemoryKilled;
      killed = true;
    }
    if (killed) {
      ::killpg(pid, SIGKILL);
      ::wait4(pid, &status, 0, &usage);
      exited = true;
      end = Clock::now();
      drain_until = end + kDrainWindow;
    }
  }
  for (Stream* s : {&out, &err}) {
    if (s->fd >= 0) ::close(s->fd);
  }

  result.duration = std::chrono::duration<double>(end - start).count();
  result.stdout_text = truncate_stream(out.data, out.total, spec.stream_cap);
  result.stderr_text = truncate_stream(err.data, err.total, spec.stream_cap);
  if (killed) return result;

  if (WIFEXITED(status)) {
    result.termination = Termination::Exited;
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.termination = Termination::Signaled;
    result.signal = WTERMSIG(status);
  }
  // ru_maxrss is in KiB and covers reaped descendants too.
  const auto peak = static_cast<std::uint64_t>(usage.ru_maxrss) * 1024ULL;
  if (spec.memory_limit > 0 && peak > spec.memory_limit) {
    result.termination = Termination::MemoryKilled;
    result.exit_code.reset();
    result.signal.reset();
  }
  return result;
}

}  // namespace mlharness::sandbox::detail
