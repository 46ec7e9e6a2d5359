#pragma once

#include <string_view>

#include "profcct/ingest.h"
#include "profcct/profile.h"

namespace testsupport {

inline constexpr std::string_view kP1 = "main;a;b 3\nmain;a;c 2\nmain;d 5\n";
inline constexpr std::string_view kP2 = "main;a;b 5\nmain;d 5\nmain;e 1\n";
inline constexpr std::string_view kP1Doubled = "main;a;b 6\nmain;a;c 4\nmain;d 10\n";
inline constexpr std::string_view kPDisjoint = "main;z 4\n";

inline profcct::Profile folded(std::string_view text, std::string_view name = "p") {
  auto p = profcct::parse_folded(text);
  p.mutable_meta().name = std::string(name);
  return p;
}

inline profcct::Frame fn(std::string name, std::string module = {}) {
  profcct::Frame f;
  f.function_name = std::move(name);
  f.module_name = std::move(module);
  return f;
}

// Three allocation/use points: (A1,U1,6), (A1,U2,4), (A2,U1,9).
inline profcct::Profile alloc_use_fixture() {
  using namespace profcct;
  Profile p({"alloc-use", "", "", {}}, {{"bytes", "bytes", MetricKind::kAdditive, Aggregator::kSum}});
  auto point = [&](const char* alloc, const char* use, std::uint64_t v) {
    std::vector<RoleStack> ctx{{"alloc", {fn("main"), fn(alloc)}}, {"use", {fn("main"), fn(use)}}};
    std::vector<Count> values{v};
    p.add_multi_context_sample(ctx, values);
  };
  point("A1", "U1", 6);
  point("A1", "U2", 4);
  point("A2", "U1", 9);
  return p;
}

}  // namespace testsupport
