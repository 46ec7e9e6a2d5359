#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profcct/profile.h"

namespace profcct {

enum class ViewKind { kTopDown, kBottomUp, kFlat };

std::string_view to_string(ViewKind kind);  // "topdown", "bottomup", "flat"
std::optional<ViewKind> parse_view_kind(std::string_view text);

// What a view node stands for.
enum class ViewRole : std::uint8_t {
  kRoot,
  kFrame,   // a frame (top-down) or a function (bottom-up, flat)
  kModule,  // flat grouping levels
  kFile,
  kOther,   // residual left by prune
  kDeep,    // residual left by depth truncation
};

// Which value sets rectangle widths and drives pruning. Flat views tile by
// exclusive value because union-counted inclusive values overlap.
enum class WidthBasis { kInclusive, kExclusive };

// Display label of a view node; `frame` may be null for synthetic roles.
std::string view_label(ViewRole role, const Frame* frame, std::uint32_t run = 1);

struct ViewNode {
  std::uint64_t inclusive = 0;
  std::uint64_t exclusive = 0;
  FrameId frame = kNoFrame;   // index into ViewTree::frames
  NodeId source = kNoNode;    // originating CCT node, top-down views only
  std::uint32_t parent = kNoNode;
  std::uint32_t run : 24 = 1;  // recursion run length after collapse_recursion
  ViewRole role : 8 = ViewRole::kFrame;
};

// A view of one metric. Node 0 is the root; children are ordered by
// descending width value, ties broken by label.
//
// top-down:  the CCT itself; node index == CCT node id as computed.
// bottom-up: level 1 holds one node per function, below it the reversed
//            caller chains. Each node carries the level-1 function's self
//            cost (`exclusive`) and subtree cost (`inclusive`, outermost
//            activations only) that reached it through that chain.
// flat:      module -> file -> function; `exclusive` is self cost,
//            `inclusive` counts every sample at most once per group.
//
// Child lists live in one shared array: the children of n are
// child_ids[child_offsets[n] .. child_offsets[n + 1]).
struct ViewTree {
  ViewKind kind = ViewKind::kTopDown;
  std::string metric;
  WidthBasis basis = WidthBasis::kInclusive;
  std::vector<Frame> frames;
  std::vector<ViewNode> nodes;
  std::vector<std::uint32_t> child_offsets;
  std::vector<std::uint32_t> child_ids;

  std::span<const std::uint32_t> children(std::uint32_t node) const {
    if (node + 1 >= child_offsets.size()) return {};
    return {child_ids.data() + child_offsets[node], child_offsets[node + 1] - child_offsets[node]};
  }
  std::uint64_t value(std::uint32_t node) const {
    const auto& n = nodes[node];
    return basis == WidthBasis::kInclusive ? n.inclusive : n.exclusive;
  }
  std::uint64_t total() const { return nodes.empty() ? 0 : value(0); }

  std::string label(std::uint32_t node) const;
  // Searchable function name; empty for grouping and synthetic nodes.
  std::string function_name(std::uint32_t node) const;
  // Labels from the first level below the root down to `node`.
  std::vector<std::string> path_labels(std::uint32_t node) const;
  std::size_t depth(std::uint32_t node) const;
};

// Which carried value sets bottom-up widths.
enum class BottomUpMode {
  kExclusive,  // the callee's self cost
  kInclusive,  // the callee's subtree cost
};

struct ViewOptions {
  BottomUpMode bottom_up = BottomUpMode::kExclusive;
};

// Throws kUnknownMetric, and kUnknownMetricSemantics for derived metrics and
// for snapshot metrics outside top-down (where inclusive == exclusive == raw).
ViewTree compute_view(const Profile& profile, std::string_view metric, ViewKind kind,
                      const ViewOptions& options = {});

enum class TraversalOrder { kPre, kPost };

// Read-only walks. The callback gets the node and its depth (root = 0).
void traverse(const ViewTree& tree, TraversalOrder order,
              const std::function<void(std::uint32_t, std::size_t)>& visit);
void traverse(const Profile& profile, TraversalOrder order,
              const std::function<void(NodeId, std::size_t)>& visit);

enum class Directive { kKeep, kElide, kMergeWithPreviousSibling };

using Visitor = std::function<Directive(const ViewTree&, std::uint32_t node, std::size_t depth)>;

// Calls `visitor` once per node in the given order, then applies the returned
// directives. Elided nodes are spliced out: their self value moves to the
// parent and their children are re-parented. A merged node folds into its
// previous sibling, which must map to the same file and line (kMerge
// otherwise). Siblings that end up with the same identity are merged.
// Exceptions thrown by the visitor propagate unchanged.
ViewTree apply_visitor(const ViewTree& tree, TraversalOrder order, const Visitor& visitor);

// Collapses maximal runs of directly recursive calls (same function, parent
// to child) into one node labeled `name (xk)`.
ViewTree collapse_recursion(const ViewTree& tree);

// Removes subtrees whose width value is below threshold * total and replaces
// each parent's removed set with one «other» child. At threshold 1 everything
// below the root folds into a single «other». Throws kRange outside [0, 1].
ViewTree prune(const ViewTree& tree, double threshold);

// Cuts the tree below `max_depth` (root = 0), replacing each cut set with one
// «deep» child.
ViewTree truncate_depth(const ViewTree& tree, std::size_t max_depth);

// Nodes whose function name contains `query`, case-insensitively, in index
// order. Throws kEmptyQuery.
std::vector<std::uint32_t> search(const ViewTree& tree, std::string_view query);

// Index of the node reached by following `labels` from the root, if any.
std::optional<std::uint32_t> find_path(const ViewTree& tree,
                                       const std::vector<std::string>& labels);

}  // namespace profcct
