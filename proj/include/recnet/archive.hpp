#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "recnet/tensor.hpp"

namespace recnet {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Self-describing container of string metadata and named double arrays.
///
/// Layout (little-endian):
///   "RECNETAR"           8-byte magic
///   u32 container version
///   u64 payload size
///   payload:
///     u32 meta count,  { str key, str value }*
///     u32 array count, { str name, u32 rank, i64 dims[rank], f64 data[] }*
///   u32 CRC-32 of payload
/// where str = u32 length + bytes. A file that is truncated, has a bad
/// checksum or an unknown version is rejected before anything is returned.
struct Archive {
  static constexpr uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> arrays;

  /// Writes to a sibling temporary file and renames it into place.
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

  const std::string& meta_at(const std::string& key) const;
  const Tensor& array_at(const std::string& name) const;
};

}  // namespace recnet
