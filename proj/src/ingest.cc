#include "profcct/ingest.h"

#include <algorithm>

#include "profcct/error.h"
#include "profcct/io.h"
#include "profcct/native_format.h"

namespace profcct {

bool looks_like_pprof(std::string_view bytes);  // pprof.cc

namespace {

// `<frame>(;<frame>)* <integer>` on the first non-blank line.
bool looks_like_folded(std::string_view bytes) {
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto eol = bytes.find('\n', pos);
    if (eol == std::string_view::npos) eol = bytes.size();
    std::string_view line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    if (line.empty()) continue;
    auto space = line.find_last_of(" \t");
    if (space == std::string_view::npos) return false;
    std::string_view value = line.substr(space + 1);
    std::string_view stack = line.substr(0, space);
    if (value.empty() || stack.empty()) return false;
    if (!std::all_of(value.begin(), value.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return false;
    }
    if (stack.front() == ';' || stack.back() == ';' || stack.find(";;") != std::string_view::npos) {
      return false;
    }
    return std::none_of(stack.begin(), stack.end(), [](char c) {
      auto u = static_cast<unsigned char>(c);
      return u < 0x20 && c != '\t';
    });
  }
  return false;
}

}  // namespace

std::string_view to_string(SourceFormat format) {
  switch (format) {
    case SourceFormat::kFolded: return "folded";
    case SourceFormat::kPprof: return "pprof";
    case SourceFormat::kNative: return "native";
  }
  return "unknown";
}

SourceFormat detect_format(std::string_view bytes) {
  if (bytes.empty()) throw Error(ErrorKind::kUnknownFormat, "empty input");
  if (bytes.substr(0, kNativeMagic.size()) == kNativeMagic) return SourceFormat::kNative;
  if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
      static_cast<unsigned char>(bytes[1]) == 0x8b) {
    return SourceFormat::kPprof;
  }
  if (looks_like_folded(bytes)) return SourceFormat::kFolded;
  if (looks_like_pprof(bytes)) return SourceFormat::kPprof;
  throw Error(ErrorKind::kUnknownFormat, "unrecognized profile format");
}

Profile load_profile(std::string_view bytes, std::string_view name) {
  Profile profile = [&] {
    // Empty or whitespace-only text is an empty folded profile.
    if (bytes.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      return parse_folded(bytes);
    }
    switch (detect_format(bytes)) {
      case SourceFormat::kNative: return deserialize(bytes);
      case SourceFormat::kPprof: return parse_pprof(bytes);
      case SourceFormat::kFolded: break;
    }
    return parse_folded(bytes);
  }();
  if (profile.meta().name.empty()) profile.mutable_meta().name = std::string(name);
  return profile;
}

Profile load_profile_file(const std::filesystem::path& path) {
  return load_profile(read_file(path), path.stem().string());
}

}  // namespace profcct
