// SPDX-License-Identifier: Apache-2.0
#include "bism_cli/lockfile.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <string>
#include <system_error>

#include "bism/error.hpp"

namespace bism::cli {

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
  std::filesystem::create_directories(dir);
  // O_EXCL makes creation atomic, so two processes cannot both succeed.
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw ResourceError("output directory '" + dir.string() + "' is locked by another run (" +
                          path_.string() + ")");
    }
    throw ResourceError("cannot create lock '" + path_.string() + "': " +
                        std::error_code(errno, std::generic_category()).message());
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace bism::cli
