#pragma once

// Versioned binary container for named double matrices plus a json header.
//
// Layout (little endian):
//   8 bytes   magic "ACWGARC\0"
//   u32       format version
//   u64       header length, then the header json text
//   for each tensor listed in header["tensors"] (name, rows, cols):
//             rows*cols f64 values, column-major
//   u64       FNV-1a checksum of everything before it

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace acwg {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct TensorArchive {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

  const Eigen::MatrixXd& at(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);

/// Throws DataError on a bad magic, unknown version, truncation, checksum
/// mismatch or non-finite values.
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace acwg
