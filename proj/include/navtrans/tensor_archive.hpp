#pragma once

// Named-tensor container used for checkpoints.
//
// Byte layout (all integers unsigned little-endian, reals IEEE-754 binary64
// little-endian):
//
//   offset  size  field
//   0       4     magic "NVTA"
//   4       4     u32 format version (currently 1)
//   8       8     u64 metadata length M
//   16      M     metadata, UTF-8 text (free-form; checkpoints store JSON)
//   16+M    4     u32 entry count E
//   then E entries, sorted by name (bytewise):
//           4     u32 name length L
//           L     name bytes
//           4     u32 rank R (always 2)
//           8*R   u64 extents, outermost first
//           8*N   f64 values in row-major order, N = product of extents

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "navtrans/tensor.hpp"

namespace navtrans {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct TensorArchive {
  std::string metadata;
  std::map<std::string, ad::Tensor> tensors;
};

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(const std::string& bytes);

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace navtrans
