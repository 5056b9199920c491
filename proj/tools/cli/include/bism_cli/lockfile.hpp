// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

namespace bism::cli {

/// Exclusive `.lock` file in an output directory, removed on destruction.
/// ResourceError when another writer already holds it.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace bism::cli
