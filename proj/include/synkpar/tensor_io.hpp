#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "synkpar/tensor.hpp"

namespace synkpar {

/// Binary tensor container.
///
/// Layout (all integers little-endian):
///   bytes 0..3   magic "SYNK"
///   byte  4      format version, currently 1
///   byte  5      dtype code: 1 = float32, 2 = float64
///   byte  6      rank
///   byte  7      zero padding (header is 8 bytes)
///   then         rank x u64 extents
///   then         row-major element payload, little-endian
void save_tensor(std::ostream& out, const NdBuffer& buf);
void save_tensor(const std::string& path, const NdBuffer& buf);

NdBuffer load_tensor(std::istream& in);
NdBuffer load_tensor(const std::string& path);

// In-memory forms, used by the stream functions and by tests.
std::vector<std::uint8_t> tensor_to_bytes(const NdBuffer& buf);
NdBuffer tensor_from_bytes(const std::vector<std::uint8_t>& bytes);

} // namespace synkpar
