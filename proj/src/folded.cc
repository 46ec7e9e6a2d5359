#include <algorithm>
#include <charconv>
#include <utility>
#include <vector>

#include "profcct/error.h"
#include "profcct/ingest.h"

namespace profcct {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

Frame parse_folded_frame(std::string_view text) {
  Frame frame;
  if (auto bang = text.find('!'); bang != std::string_view::npos) {
    frame.module_name = std::string(text.substr(0, bang));
    text.remove_prefix(bang + 1);
  }
  if (auto at = text.rfind('@'); at != std::string_view::npos) {
    std::string_view location = text.substr(at + 1);
    auto colon = location.rfind(':');
    if (colon != std::string_view::npos && all_digits(location.substr(colon + 1))) {
      std::uint32_t line = 0;
      auto digits = location.substr(colon + 1);
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), line);
      if (ec == std::errc()) {
        frame.file_path = std::string(location.substr(0, colon));
        frame.line = line;
        text = text.substr(0, at);
      }
    }
  }
  frame.function_name = std::string(text);
  return frame;
}

std::string format_folded_frame(const Frame& frame) {
  std::string name = display_name(frame);
  std::string out;
  if (!frame.module_name.empty() || name.find('!') != std::string::npos) {
    out += frame.module_name;
    out += '!';
  }
  out += name;
  if (!frame.file_path.empty() || frame.line != 0 || name.find('@') != std::string::npos) {
    out += '@';
    out += frame.file_path;
    out += ':';
    out += std::to_string(frame.line);
  }
  return out;
}

Profile parse_folded(std::string_view text, std::string_view metric_name, std::string_view unit) {
  ProfileMeta meta;
  meta.collector = "folded";
  Profile profile(std::move(meta), {MetricDescriptor{std::string(metric_name), std::string(unit),
                                                     MetricKind::kAdditive, Aggregator::kSum}});
  std::vector<Frame> stack;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = trim_cr(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    auto fail = [&](const std::string& why) {
      return Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": " + why, line_no);
    };
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    auto space = line.find_last_of(" \t");
    if (space == std::string_view::npos) throw fail("expected '<stack> <value>'");
    std::string_view value_text = line.substr(space + 1);
    std::string_view stack_text = line.substr(0, space);
    while (!stack_text.empty() && (stack_text.back() == ' ' || stack_text.back() == '\t')) {
      stack_text.remove_suffix(1);
    }
    if (!value_text.empty() && value_text.front() == '-') throw fail("negative value");
    if (!all_digits(value_text)) throw fail("value '" + std::string(value_text) + "' is not an integer");
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
    if (ec != std::errc()) throw fail("value out of range");
    if (stack_text.empty()) throw fail("empty stack");

    stack.clear();
    std::size_t start = 0;
    while (true) {
      auto semi = stack_text.find(';', start);
      std::string_view part = stack_text.substr(
          start, semi == std::string_view::npos ? std::string_view::npos : semi - start);
      if (part.empty()) throw fail("empty frame name");
      stack.push_back(parse_folded_frame(part));
      if (stack.back().function_name.empty()) throw fail("empty frame name");
      if (semi == std::string_view::npos) break;
      start = semi + 1;
    }
    profile.add_sample(stack, {value});
  }
  return profile;
}

std::string emit_folded(const Profile& profile, std::string_view metric) {
  std::size_t m = profile.metric_index(metric);
  if (profile.metrics()[m].kind != MetricKind::kAdditive) {
    throw Error(ErrorKind::kUnknownMetricSemantics,
                "folded output needs an additive metric, '" + std::string(metric) + "' is " +
                    std::string(to_string(profile.metrics()[m].kind)));
  }

  std::vector<std::string> frame_text(profile.frames().size());
  std::vector<bool> formatted(profile.frames().size(), false);
  auto text_of = [&](FrameId f) -> const std::string& {
    if (!formatted[f]) {
      const Frame& frame = profile.frame(f);
      std::string s = format_folded_frame(frame);
      if (s.find_first_of(";\n\r") != std::string::npos) {
        throw Error(ErrorKind::kInvalidFrame,
                    "frame '" + display_name(frame) + "' cannot be written in folded form");
      }
      frame_text[f] = std::move(s);
      formatted[f] = true;
    }
    return frame_text[f];
  };

  // Root-path strings built incrementally: parents precede children.
  std::vector<std::string> paths(profile.node_count());
  std::vector<std::pair<std::string_view, std::uint64_t>> lines;
  for (NodeId n = 1; n < profile.node_count(); ++n) {
    const auto& node = profile.node(n);
    if (node.parent != profile.root()) {
      paths[n] = paths[node.parent];
      paths[n] += ';';
    }
    paths[n] += text_of(node.frame);
    // The synthetic root has no folded spelling, so values recorded on it are skipped.
    if (auto v = profile.count(n, m); v && *v != 0) lines.emplace_back(paths[n], *v);
  }
  std::sort(lines.begin(), lines.end());

  std::string out;
  for (const auto& [path, value] : lines) {
    out += path;
    out += ' ';
    out += std::to_string(value);
    out += '\n';
  }
  return out;
}

}  // namespace profcct
