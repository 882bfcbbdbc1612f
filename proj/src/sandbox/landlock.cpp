#include <fcntl.h>
#include <linux/landlock.h>
#include <sys/prctl.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "mlharness/errors.hpp"
#include "process.hpp"

// The installed uapi header may predate the newer access rights.
#ifndef LANDLOCK_ACCESS_FS_REFER
#define LANDLOCK_ACCESS_FS_REFER (1ULL << 13)
#endif
#ifndef LANDLOCK_ACCESS_FS_TRUNCATE
#define LANDLOCK_ACCESS_FS_TRUNCATE (1ULL << 14)
#endif
#ifndef LANDLOCK_ACCESS_FS_IOCTL_DEV
#define LANDLOCK_ACCESS_FS_IOCTL_DEV (1ULL << 15)
#endif

namespace mlharness::sandbox::detail {

namespace {

struct RulesetAttr {
  std::uint64_t handled_access_fs;
  std::uint64_t handled_access_net;
};

constexpr std::uint64_t kNetBindTcp = 1ULL << 0;
constexpr std::uint64_t kNetConnectTcp = 1ULL << 1;

constexpr std::uint64_t kFileRights = LANDLOCK_ACCESS_FS_EXECUTE | LANDLOCK_ACCESS_FS_WRITE_FILE |
                                      LANDLOCK_ACCESS_FS_READ_FILE | LANDLOCK_ACCESS_FS_TRUNCATE |
                                      LANDLOCK_ACCESS_FS_IOCTL_DEV;
constexpr std::uint64_t kReadRights =
    LANDLOCK_ACCESS_FS_EXECUTE | LANDLOCK_ACCESS_FS_READ_FILE | LANDLOCK_ACCESS_FS_READ_DIR;

std::uint64_t handled_fs(int abi) {
  std::uint64_t all = (LANDLOCK_ACCESS_FS_MAKE_SYM << 1) - 1;
  if (abi >= 2) all |= LANDLOCK_ACCESS_FS_REFER;
  if (abi >= 3) all |= LANDLOCK_ACCESS_FS_TRUNCATE;
  if (abi >= 5) all |= LANDLOCK_ACCESS_FS_IOCTL_DEV;
  return all;
}

void add_path(int ruleset, const std::filesystem::path& path, std::uint64_t access) {
  const int fd = ::open(path.c_str(), O_PATH | O_CLOEXEC);
  if (fd < 0) return;  // absent optional roots are skipped
  struct stat st {};
  if (::fstat(fd, &st) == 0 && !S_ISDIR(st.st_mode)) access &= kFileRights;
  landlock_path_beneath_attr attr{};
  attr.allowed_access = access;
  attr.parent_fd = fd;
  const long rc = ::syscall(__NR_landlock_add_rule, ruleset, LANDLOCK_RULE_PATH_BENEATH, &attr, 0);
  const int err = errno;
  ::close(fd);
  if (rc != 0) {
    ::close(ruleset);
    throw IsolationError("landlock_add_rule(" + path.string() + "): " + std::strerror(err));
  }
}

}  // namespace

int landlock_abi() {
  static const int abi = [] {
    const long v = ::syscall(__NR_landlock_create_ruleset, nullptr, 0, LANDLOCK_CREATE_RULESET_VERSION);
    return v < 0 ? -1 : static_cast<int>(v);
  }();
  return abi;
}

int build_ruleset(const std::vector<std::filesystem::path>& read_paths,
                  const std::vector<std::filesystem::path>& write_paths, bool deny_network) {
  const int abi = landlock_abi();
  if (abi < 1) throw IsolationError("Landlock is not supported by this kernel");
  const std::uint64_t fs_rights = handled_fs(abi);

  RulesetAttr attr{fs_rights, 0};
  std::size_t attr_size = sizeof(std::uint64_t);
  if (abi >= 4 && deny_network) {
    attr.handled_access_net = kNetBindTcp | kNetConnectTcp;
    attr_size = sizeof(RulesetAttr);
  }
  const long fd = ::syscall(__NR_landlock_create_ruleset, &attr, attr_size, 0);
  if (fd < 0) throw IsolationError(std::string("landlock_create_ruleset: ") + std::strerror(errno));
  const int ruleset = static_cast<int>(fd);

  for (const auto& p : read_paths) add_path(ruleset, p, kReadRights & fs_rights);
  for (const auto& p : write_paths) add_path(ruleset, p, fs_rights);
  return ruleset;
}

bool restrict_self(int ruleset_fd) {
  if (::prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0) return false;
  return ::syscall(__NR_landlock_restrict_self, ruleset_fd, 0) == 0;
}

}  // namespace mlharness::sandbox::detail
