#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "profcct/multi_profile.h"
#include "profcct/profile.h"
#include "profcct/view.h"

namespace profcct {

// Label of the rect that absorbs a parent's too-narrow children.
inline constexpr std::string_view kNarrowLabel = "\xC2\xAB\xE2\x80\xA6\xC2\xBB";

struct SourceLink {
  std::string file;
  std::uint32_t line = 0;

  bool operator==(const SourceLink&) const = default;
};

struct FlameRect {
  std::int64_t node = -1;  // tree node index, -1 for the narrow-children rect
  std::uint32_t depth = 0;
  double x0 = 0, x1 = 0;   // fractions of the root width
  std::string label;       // diff rects carry their tag prefix, e.g. "[+] main"
  std::string color_key;   // module name, or the diff tag name
  std::optional<DiffTag> tag;
  std::optional<SourceLink> source;
  NodeId context = kNoNode;  // CCT node, top-down views only
};

struct LayoutOptions {
  double min_width = 1.0 / 2000;  // in [0, 0.5]
};

// Pre-order rects. Children tile their parent from the left in tree order;
// children narrower than min_width are merged into one trailing «…» rect and
// zero-width subtrees are skipped. Throws kRange for min_width outside
// [0, 0.5].
std::vector<FlameRect> layout_flame(const ViewTree& tree, const LayoutOptions& options = {});
std::vector<FlameRect> layout_flame(const DiffTree& tree, const LayoutOptions& options = {});
std::vector<FlameRect> layout_flame(const AggregateTree& tree, const LayoutOptions& options = {});

struct TableRow {
  std::uint32_t node = 0;
  std::uint32_t parent = kNoNode;
  std::uint32_t depth = 0;
  std::string label;
  std::uint64_t inclusive = 0;
  std::uint64_t exclusive = 0;
  double percent = 0;  // of the root's width value
  bool expandable = false;
};

// Rows for the children of `node`, in tree order; the root row alone when
// `node` is kNoNode. Throws kUnknownPath for an unknown node.
std::vector<TableRow> table_rows(const ViewTree& tree, std::uint32_t node = kNoNode);

struct ExportOptions {
  LayoutOptions layout;
  const Profile* profile = nullptr;  // adds the profile's metric list when set
};

// Renderer documents: JSON with sorted keys and doubles at 9 significant
// digits, byte-identical for identical inputs.
std::string export_view(const ViewTree& tree, const ExportOptions& options = {});
std::string export_diff(const DiffTree& tree, const ExportOptions& options = {});
std::string export_aggregate(const AggregateTree& tree, const ExportOptions& options = {});

}  // namespace profcct
