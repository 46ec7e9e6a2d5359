#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace profcct {

using FrameId = std::uint32_t;
using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);
inline constexpr FrameId kNoFrame = static_cast<FrameId>(-1);

// Label of the synthetic root every profile starts from.
inline constexpr std::string_view kRootName = "\xC2\xAB" "root" "\xC2\xBB";

// Code-mapping record. Frames are interned per profile, identity is the full
// field tuple, so one function at two lines yields two frames.
struct Frame {
  std::string function_name;
  std::string module_name;
  std::string file_path;
  std::uint32_t line = 0;     // 0 = unknown
  std::uint64_t address = 0;  // 0 = unknown

  bool operator==(const Frame&) const = default;
  std::strong_ordering operator<=>(const Frame&) const = default;
};

struct FrameHash {
  std::size_t operator()(const Frame& f) const noexcept;
};

// Function name, or the hex address for unsymbolized frames.
std::string display_name(const Frame& frame);

// The function a frame belongs to: same module, file and name, with line and
// address cleared (unless the address is all we have).
Frame function_of(const Frame& frame);

enum class MetricKind { kAdditive, kSnapshot, kDerived };
enum class Aggregator { kSum, kMin, kMax, kMean };

std::string_view to_string(MetricKind kind);
std::string_view to_string(Aggregator aggregator);
std::optional<MetricKind> parse_metric_kind(std::string_view text);
std::optional<Aggregator> parse_aggregator(std::string_view text);

struct MetricDescriptor {
  std::string name;
  std::string unit;
  MetricKind kind = MetricKind::kAdditive;
  Aggregator aggregator = Aggregator::kSum;

  bool operator==(const MetricDescriptor&) const = default;
};

enum class NodeKind : std::uint8_t { kCode, kDataObject };

struct ContextNode {
  NodeId id = kNoNode;
  FrameId frame = kNoFrame;
  NodeId parent = kNoNode;
  std::vector<NodeId> children;
  NodeKind kind = NodeKind::kCode;
};

using Count = std::optional<std::uint64_t>;

inline constexpr std::string_view kSelfRole = "self";

struct RoleContext {
  std::string role;
  NodeId node = kNoNode;

  bool operator==(const RoleContext&) const = default;
};

struct MonitoringPoint {
  std::vector<RoleContext> contexts;
  std::vector<Count> values;
};

// One context of a multi-context sample: a role and its root-first stack.
struct RoleStack {
  std::string role;
  std::vector<Frame> stack;
};

struct ProfileMeta {
  std::string name;
  std::string collector;
  std::string timestamp;
  std::map<std::string, std::string> properties;

  bool operator==(const ProfileMeta&) const = default;
};

// A calling context tree with per-metric node values, an interned frame table
// and the monitoring points the values came from.
//
// Construction is single-writer. Node ids are dense and every parent id is
// smaller than its children's ids, so a reverse id scan is a post-order walk.
// Once built, a profile is shared read-only (see ProfileRef).
class Profile {
 public:
  // Throws kDuplicateMetric when two descriptors share a name.
  Profile(ProfileMeta meta, std::vector<MetricDescriptor> metrics);

  const ProfileMeta& meta() const { return meta_; }
  ProfileMeta& mutable_meta() { return meta_; }

  std::span<const MetricDescriptor> metrics() const { return metrics_; }
  std::optional<std::size_t> find_metric(std::string_view name) const;
  // Throws kUnknownMetric.
  std::size_t metric_index(std::string_view name) const;

  std::span<const Frame> frames() const { return frames_; }
  const Frame& frame(FrameId id) const { return frames_.at(id); }
  const Frame& frame_of(NodeId node) const { return frames_[nodes_.at(node).frame]; }

  std::span<const ContextNode> nodes() const { return nodes_; }
  const ContextNode& node(NodeId id) const { return nodes_.at(id); }
  std::size_t node_count() const { return nodes_.size(); }
  NodeId root() const { return 0; }

  std::span<const MonitoringPoint> points() const { return points_; }

  // Raw value of an additive or snapshot metric at a node.
  Count count(NodeId node, std::size_t metric) const;
  // Value of a derived metric at a node.
  std::optional<double> real(NodeId node, std::size_t metric) const;

  // Root-first frames from the node up to (excluding) the synthetic root.
  std::vector<FrameId> path(NodeId node) const;
  // The child of `parent` with the given frame, or kNoNode.
  NodeId find_child(NodeId parent, FrameId frame) const;

  // --- building ---
  FrameId intern_frame(const Frame& frame);
  // Returns the child of `parent` for `frame`, creating it when absent.
  NodeId child(NodeId parent, FrameId frame, NodeKind kind = NodeKind::kCode);

  // Interns a root-first stack and records one single-context point at its
  // leaf. Throws kArity on an empty stack or a value count mismatch, and
  // kInvalidFrame for a frame with neither a name nor an address.
  NodeId add_sample(std::span<const Frame> stack, std::span<const Count> values,
                    NodeKind leaf_kind = NodeKind::kCode);
  NodeId add_sample(std::span<const Frame> stack,
                    std::initializer_list<std::uint64_t> values);

  // Records values for a single-context point at an existing node.
  void record(NodeId node, std::span<const Count> values);

  // Interns every role's stack and records one multi-context point. Node raw
  // values are untouched: they only reflect single-context points.
  std::vector<NodeId> add_multi_context_sample(std::span<const RoleStack> contexts,
                                               std::span<const Count> values);
  // Same, over existing nodes.
  void record_point(std::vector<RoleContext> contexts, std::span<const Count> values);

  // Appends a derived (floating-point, non-additive) metric column.
  std::size_t add_derived_metric(MetricDescriptor descriptor,
                                 std::vector<std::optional<double>> values);

  // Copy with nodes renumbered in pre-order (children ordered by frame),
  // unreferenced frames dropped and frames numbered by first use.
  Profile canonicalized() const;

 private:
  friend class NativeReader;

  struct Column {
    std::vector<Count> counts;                 // additive, snapshot
    std::vector<std::optional<double>> reals;  // derived
  };

  NodeId append_node(NodeId parent, FrameId frame, NodeKind kind);
  void check_values(std::span<const Count> values) const;
  void accumulate(std::vector<Count>& into, std::span<const Count> values) const;
  static std::uint64_t child_key(NodeId parent, FrameId frame) {
    return (static_cast<std::uint64_t>(parent) << 32) | frame;
  }

  ProfileMeta meta_;
  std::vector<MetricDescriptor> metrics_;
  std::vector<Frame> frames_;
  std::unordered_map<Frame, FrameId, FrameHash> frame_index_;
  std::vector<ContextNode> nodes_;
  std::unordered_map<std::uint64_t, NodeId> child_index_;
  std::vector<Column> columns_;
  std::vector<MonitoringPoint> points_;
  std::unordered_map<NodeId, std::size_t> self_point_index_;
  std::unordered_map<std::string, std::size_t> point_index_;
};

using ProfileRef = std::shared_ptr<const Profile>;

// Sum of a metric's raw values over all nodes (the root inclusive value of an
// additive metric). Missing values count as zero.
std::uint64_t total(const Profile& profile, std::size_t metric);

// Index of the first additive metric; throws kUnknownMetric when none exists.
std::size_t default_metric(const Profile& profile);

}  // namespace profcct
