#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "profcct/profile.h"

namespace profcct {

enum class SourceFormat { kFolded, kPprof, kNative };

std::string_view to_string(SourceFormat format);

// Decided from content only: "PCCT" magic, gzip magic or a decodable pprof
// message, or a first line shaped like `f1;f2;... <integer>`.
// Throws kUnknownFormat.
SourceFormat detect_format(std::string_view bytes);

// Collapsed-stack text, one `f1;...;fk <value>` sample per line. A frame is
// `name`, `module!name`, `name@file:line` or `module!name@file:line`.
// Throws kParse carrying the 1-based line number.
Profile parse_folded(std::string_view text, std::string_view metric_name = "samples",
                     std::string_view unit = "samples");

// One line per node with a non-zero exclusive value, sorted by path text.
// Throws kUnknownMetric, kUnknownMetricSemantics for non-additive metrics and
// kInvalidFrame for frames that cannot be written unambiguously.
std::string emit_folded(const Profile& profile, std::string_view metric);

// Folded spelling of a single frame, and its inverse.
std::string format_folded_frame(const Frame& frame);
Frame parse_folded_frame(std::string_view text);

// gzip-compressed or raw pprof `profile.proto` message. Throws kFormat.
Profile parse_pprof(std::string_view bytes);

// Detects the format and parses. `name` becomes meta.name when the source
// format carries none.
Profile load_profile(std::string_view bytes, std::string_view name = {});
Profile load_profile_file(const std::filesystem::path& path);

}  // namespace profcct
