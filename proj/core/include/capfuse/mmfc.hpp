#pragma once

#include <span>
#include <string>
#include <vector>

#include "capfuse/data.hpp"

namespace capfuse {

// MMFC feature container, little-endian:
//   magic "MMFC" (4 bytes), version u16 = 1, bundle count u32
//   per bundle:  id length u16 + UTF-8 id, modality count u16
//   per modality: name length u16 + UTF-8 name, N u32, D u32, N*D f32 row-major
// Round trips are bit-exact; malformed input throws FormatError carrying the
// byte offset of the problem.

void write_features(std::span<const FeatureBundle> bundles, const std::string& path);
std::vector<FeatureBundle> read_features(const std::string& path);

// Same format, in-memory (used by tests and the writers above).
std::vector<std::uint8_t> encode_features(std::span<const FeatureBundle> bundles);
std::vector<FeatureBundle> decode_features(std::span<const std::uint8_t> bytes);

}  // namespace capfuse
