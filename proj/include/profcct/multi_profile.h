#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "profcct/profile.h"
#include "profcct/view.h"

namespace profcct {

// Nodes of several views matched by identity path: two nodes match when their
// parents match and they share role, frame and recursion run.
struct UnifiedNode {
  ViewRole role = ViewRole::kFrame;
  FrameId frame = kNoFrame;
  std::uint32_t run = 1;
  std::uint32_t parent = kNoNode;
  std::vector<std::uint32_t> children;
  std::vector<std::uint32_t> sources;  // per input: view node index or kNoNode
};

struct UnifiedTree {
  std::vector<Frame> frames;
  std::vector<UnifiedNode> nodes;  // node 0 is the root, present in every input
};

// All inputs must be views of the same kind.
UnifiedTree unify(const std::vector<const ViewTree*>& views);

// ---- differentiation ----

enum class DiffTag : std::uint8_t { kAdded, kDeleted, kIncreased, kDecreased, kUnchanged };

std::string_view to_string(DiffTag tag);  // "added", "deleted", ...
std::string_view tag_prefix(DiffTag tag);  // "[A]", "[D]", "[+]", "[-]", ""

struct DiffNode {
  ViewRole role = ViewRole::kFrame;
  FrameId frame = kNoFrame;
  std::uint32_t run = 1;
  std::uint32_t parent = kNoNode;
  std::vector<std::uint32_t> children;
  NodeId source1 = kNoNode;  // CCT ids when diffing top-down views
  NodeId source2 = kNoNode;
  std::optional<std::uint64_t> m1, m2;
  DiffTag tag = DiffTag::kUnchanged;
};

struct DiffTree {
  ViewKind kind = ViewKind::kTopDown;
  std::string metric;
  std::vector<Frame> frames;
  std::vector<DiffNode> nodes;
  double scale = 1.0;  // applied to m2; total(P1) / total(P2) when normalized

  bool normalized() const { return scale != 1.0; }
  std::optional<double> scaled_m2(std::uint32_t node) const;
  // m2 - m1 (m2 scaled) when both sides are present.
  std::optional<double> delta(std::uint32_t node) const;
  // Exact integer delta; present only for unnormalized diffs.
  std::optional<std::int64_t> exact_delta(std::uint32_t node) const;
  // m2 / m1, missing when either side is missing or m1 == 0.
  std::optional<double> ratio(std::uint32_t node) const;
  // Flame width: m1 + scaled m2, so both sides stay visible.
  double width(std::uint32_t node) const;
  double total() const { return nodes.empty() ? 0.0 : width(0); }

  std::string label(std::uint32_t node) const;  // without tag prefix
  std::string function_name(std::uint32_t node) const;
  std::vector<std::string> path_labels(std::uint32_t node) const;
};

struct DiffOptions {
  ViewKind kind = ViewKind::kTopDown;
  bool normalize_by_total = false;
};

// Diffs two views of one metric. Values compared are the views' width values
// (inclusive for top-down and bottom-up, exclusive for flat).
DiffTree diff_views(const ViewTree& v1, const ViewTree& v2, bool normalize_by_total = false);

// Throws kMetricMismatch when either profile lacks the metric.
DiffTree diff(const Profile& p1, const Profile& p2, std::string_view metric,
              const DiffOptions& options = {});

// ---- aggregation ----

struct AggregateStats {
  std::uint64_t sum = 0;
  std::optional<std::uint64_t> min, max;
  std::optional<double> mean;
  std::size_t present = 0;
};

struct AggregateNode {
  ViewRole role = ViewRole::kFrame;
  FrameId frame = kNoFrame;
  std::uint32_t run = 1;
  std::uint32_t parent = kNoNode;
  std::vector<std::uint32_t> children;
  std::vector<Count> values;  // one entry per input, in input order
  AggregateStats stats;
};

struct AggregateTree {
  ViewKind kind = ViewKind::kTopDown;
  std::string metric;
  Aggregator aggregator = Aggregator::kSum;
  std::vector<std::string> inputs;  // input profile names
  std::vector<Frame> frames;
  std::vector<AggregateNode> nodes;

  std::uint64_t value(std::uint32_t node) const { return nodes[node].stats.sum; }
  std::uint64_t total() const { return nodes.empty() ? 0 : value(0); }
  // The statistic selected by the metric's aggregator.
  std::optional<double> primary(std::uint32_t node) const;

  std::string label(std::uint32_t node) const;
  std::string function_name(std::uint32_t node) const;
  std::vector<std::string> path_labels(std::uint32_t node) const;
};

struct AggregateOptions {
  ViewKind kind = ViewKind::kTopDown;
  // Fill missing entries with 0 before computing stats.
  bool missing_as_zero = false;
};

AggregateStats compute_stats(const std::vector<Count>& values);

// Throws kMetricMismatch naming the first profile lacking the metric, kArity
// for an empty input list and kUnknownMetricSemantics for derived metrics.
AggregateTree aggregate(const std::vector<const Profile*>& profiles, std::string_view metric,
                        const AggregateOptions& options = {});

// Per-input values of one node, in input order. Throws kUnknownPath.
std::vector<Count> histogram(const AggregateTree& tree, const std::vector<std::string>& path);
std::vector<Count> histogram(const AggregateTree& tree, std::uint32_t node);

// ---- multi-context correlation ----

// Collects the points whose `from_role` context is `anchor` and builds a
// profile from their `to_role` contexts: the tree is the union of those
// context paths, each carrying the summed point values. A selected point
// without a `to_role` context contributes at the root. Throws kUnknownRole
// when no point carries either role, kUnknownPath for a bad anchor.
Profile correlate(const Profile& profile, NodeId anchor, std::string_view from_role,
                  std::string_view to_role);

// Roles appearing in the profile's multi-context points, sorted.
std::vector<std::string> roles(const Profile& profile);

}  // namespace profcct
