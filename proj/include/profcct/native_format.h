#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "profcct/profile.h"

namespace profcct {

// Native container: "PCCT", u16 version, u64 document length (both
// little-endian), then a UTF-8 JSON document with keys frames, meta, metrics,
// nodes and points. Nodes are written in canonical pre-order so every parent
// precedes its children.
inline constexpr std::string_view kNativeMagic = "PCCT";
inline constexpr std::uint16_t kNativeVersion = 1;
inline constexpr std::size_t kNativeHeaderSize = 4 + 2 + 8;

std::string serialize(const Profile& profile);

// Throws kFormat with the byte offset of the first problem.
Profile deserialize(std::string_view bytes);

}  // namespace profcct
