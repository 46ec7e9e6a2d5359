#include "profcct/profile.h"

#include <algorithm>
#include <charconv>
#include <functional>
#include <unordered_set>

#include "profcct/error.h"

namespace profcct {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDuplicateMetric: return "DuplicateMetric";
    case ErrorKind::kArity: return "ArityError";
    case ErrorKind::kFormat: return "FormatError";
    case ErrorKind::kUnknownFormat: return "UnknownFormat";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kUnknownMetric: return "UnknownMetric";
    case ErrorKind::kUnknownMetricSemantics: return "UnknownMetricSemantics";
    case ErrorKind::kMerge: return "MergeError";
    case ErrorKind::kRange: return "RangeError";
    case ErrorKind::kEmptyQuery: return "EmptyQuery";
    case ErrorKind::kMetricMismatch: return "MetricMismatch";
    case ErrorKind::kUnknownPath: return "UnknownPath";
    case ErrorKind::kUnknownRole: return "UnknownRole";
    case ErrorKind::kFormula: return "FormulaError";
    case ErrorKind::kCallback: return "CallbackError";
    case ErrorKind::kInvalidFrame: return "InvalidFrame";
    case ErrorKind::kIo: return "IoError";
  }
  return "Error";
}

namespace {

void hash_combine(std::size_t& seed, std::size_t value) {
  seed ^= value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
}

std::string point_key(const std::vector<RoleContext>& contexts) {
  std::string key;
  for (const auto& c : contexts) {
    key += c.role;
    key += '\0';
    key += std::to_string(c.node);
    key += '\0';
  }
  return key;
}

}  // namespace

std::size_t FrameHash::operator()(const Frame& f) const noexcept {
  std::size_t seed = std::hash<std::string>{}(f.function_name);
  hash_combine(seed, std::hash<std::string>{}(f.module_name));
  hash_combine(seed, std::hash<std::string>{}(f.file_path));
  hash_combine(seed, f.line);
  hash_combine(seed, std::hash<std::uint64_t>{}(f.address));
  return seed;
}

std::string display_name(const Frame& frame) {
  if (!frame.function_name.empty()) return frame.function_name;
  char buf[2 + 16 + 1] = {'0', 'x'};
  auto [end, ec] = std::to_chars(buf + 2, buf + sizeof(buf), frame.address, 16);
  return std::string(buf, end);
}

Frame function_of(const Frame& frame) {
  Frame fn;
  fn.function_name = frame.function_name;
  fn.module_name = frame.module_name;
  fn.file_path = frame.file_path;
  if (fn.function_name.empty()) fn.address = frame.address;
  return fn;
}

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kAdditive: return "additive";
    case MetricKind::kSnapshot: return "snapshot";
    case MetricKind::kDerived: return "derived";
  }
  return "additive";
}

std::string_view to_string(Aggregator aggregator) {
  switch (aggregator) {
    case Aggregator::kSum: return "sum";
    case Aggregator::kMin: return "min";
    case Aggregator::kMax: return "max";
    case Aggregator::kMean: return "mean";
  }
  return "sum";
}

std::optional<MetricKind> parse_metric_kind(std::string_view text) {
  if (text == "additive") return MetricKind::kAdditive;
  if (text == "snapshot") return MetricKind::kSnapshot;
  if (text == "derived") return MetricKind::kDerived;
  return std::nullopt;
}

std::optional<Aggregator> parse_aggregator(std::string_view text) {
  if (text == "sum") return Aggregator::kSum;
  if (text == "min") return Aggregator::kMin;
  if (text == "max") return Aggregator::kMax;
  if (text == "mean") return Aggregator::kMean;
  return std::nullopt;
}

Profile::Profile(ProfileMeta meta, std::vector<MetricDescriptor> metrics)
    : meta_(std::move(meta)), metrics_(std::move(metrics)) {
  std::unordered_set<std::string> seen;
  for (const auto& m : metrics_) {
    if (!seen.insert(m.name).second) {
      throw Error(ErrorKind::kDuplicateMetric, "duplicate metric name '" + m.name + "'");
    }
  }
  columns_.resize(metrics_.size());
  Frame root;
  root.function_name = std::string(kRootName);
  append_node(kNoNode, intern_frame(root), NodeKind::kCode);
}

std::optional<std::size_t> Profile::find_metric(std::string_view name) const {
  for (std::size_t i = 0; i < metrics_.size(); ++i) {
    if (metrics_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Profile::metric_index(std::string_view name) const {
  if (auto i = find_metric(name)) return *i;
  throw Error(ErrorKind::kUnknownMetric, "unknown metric '" + std::string(name) + "'");
}

Count Profile::count(NodeId node, std::size_t metric) const {
  const auto& col = columns_.at(metric);
  if (col.counts.empty()) return std::nullopt;
  return col.counts.at(node);
}

std::optional<double> Profile::real(NodeId node, std::size_t metric) const {
  const auto& col = columns_.at(metric);
  if (col.reals.empty()) return std::nullopt;
  return col.reals.at(node);
}

std::vector<FrameId> Profile::path(NodeId node) const {
  std::vector<FrameId> out;
  for (NodeId n = node; n != root() && n != kNoNode; n = nodes_.at(n).parent) {
    out.push_back(nodes_[n].frame);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

NodeId Profile::find_child(NodeId parent, FrameId frame) const {
  auto it = child_index_.find(child_key(parent, frame));
  return it == child_index_.end() ? kNoNode : it->second;
}

FrameId Profile::intern_frame(const Frame& frame) {
  auto it = frame_index_.find(frame);
  if (it != frame_index_.end()) return it->second;
  if (frame.function_name.empty() && frame.address == 0) {
    throw Error(ErrorKind::kInvalidFrame, "frame needs a function name or an address");
  }
  auto id = static_cast<FrameId>(frames_.size());
  frames_.push_back(frame);
  frame_index_.emplace(frame, id);
  return id;
}

NodeId Profile::append_node(NodeId parent, FrameId frame, NodeKind kind) {
  auto id = static_cast<NodeId>(nodes_.size());
  ContextNode node;
  node.id = id;
  node.frame = frame;
  node.parent = parent;
  node.kind = kind;
  nodes_.push_back(std::move(node));
  if (parent != kNoNode) {
    nodes_[parent].children.push_back(id);
    child_index_.emplace(child_key(parent, frame), id);
  }
  for (std::size_t m = 0; m < metrics_.size(); ++m) {
    auto& col = columns_[m];
    if (metrics_[m].kind == MetricKind::kDerived) {
      col.reals.emplace_back();
    } else {
      col.counts.emplace_back();
    }
  }
  return id;
}

NodeId Profile::child(NodeId parent, FrameId frame, NodeKind kind) {
  if (parent >= nodes_.size() || frame >= frames_.size()) {
    throw Error(ErrorKind::kArity, "child(): parent or frame out of range");
  }
  NodeId existing = find_child(parent, frame);
  if (existing != kNoNode) {
    if (kind == NodeKind::kDataObject) nodes_[existing].kind = kind;
    return existing;
  }
  return append_node(parent, frame, kind);
}

void Profile::check_values(std::span<const Count> values) const {
  if (values.size() != metrics_.size()) {
    throw Error(ErrorKind::kArity, "expected " + std::to_string(metrics_.size()) +
                                       " metric values, got " + std::to_string(values.size()));
  }
}

void Profile::accumulate(std::vector<Count>& into, std::span<const Count> values) const {
  for (std::size_t m = 0; m < metrics_.size(); ++m) {
    if (!values[m]) continue;
    switch (metrics_[m].kind) {
      case MetricKind::kAdditive:
        into[m] = into[m].value_or(0) + *values[m];
        break;
      case MetricKind::kSnapshot:
        into[m] = values[m];
        break;
      case MetricKind::kDerived:
        break;
    }
  }
}

NodeId Profile::add_sample(std::span<const Frame> stack, std::span<const Count> values,
                           NodeKind leaf_kind) {
  if (stack.empty()) throw Error(ErrorKind::kArity, "add_sample: empty stack");
  check_values(values);
  NodeId node = root();
  for (std::size_t i = 0; i < stack.size(); ++i) {
    NodeKind kind = i + 1 == stack.size() ? leaf_kind : NodeKind::kCode;
    node = child(node, intern_frame(stack[i]), kind);
  }
  record(node, values);
  return node;
}

NodeId Profile::add_sample(std::span<const Frame> stack,
                           std::initializer_list<std::uint64_t> values) {
  std::vector<Count> v(values.begin(), values.end());
  return add_sample(stack, v);
}

void Profile::record(NodeId node, std::span<const Count> values) {
  check_values(values);
  if (node >= nodes_.size()) throw Error(ErrorKind::kArity, "record: unknown node");
  std::vector<Count> node_values(metrics_.size());
  for (std::size_t m = 0; m < metrics_.size(); ++m) {
    if (metrics_[m].kind != MetricKind::kDerived) node_values[m] = columns_[m].counts[node];
  }
  accumulate(node_values, values);
  for (std::size_t m = 0; m < metrics_.size(); ++m) {
    if (metrics_[m].kind != MetricKind::kDerived) columns_[m].counts[node] = node_values[m];
  }

  auto [it, inserted] = self_point_index_.try_emplace(node, points_.size());
  if (inserted) {
    MonitoringPoint point;
    point.contexts.push_back({std::string(kSelfRole), node});
    point.values.assign(metrics_.size(), std::nullopt);
    points_.push_back(std::move(point));
  }
  accumulate(points_[it->second].values, values);
}

std::vector<NodeId> Profile::add_multi_context_sample(std::span<const RoleStack> contexts,
                                                      std::span<const Count> values) {
  check_values(values);
  std::vector<RoleContext> resolved;
  std::vector<NodeId> nodes;
  for (const auto& ctx : contexts) {
    if (ctx.stack.empty()) throw Error(ErrorKind::kArity, "empty stack for role " + ctx.role);
    NodeId node = root();
    for (const auto& f : ctx.stack) node = child(node, intern_frame(f));
    resolved.push_back({ctx.role, node});
    nodes.push_back(node);
  }
  record_point(std::move(resolved), values);
  return nodes;
}

void Profile::record_point(std::vector<RoleContext> contexts, std::span<const Count> values) {
  check_values(values);
  if (contexts.empty()) throw Error(ErrorKind::kArity, "monitoring point without contexts");
  for (const auto& c : contexts) {
    if (c.node >= nodes_.size()) {
      throw Error(ErrorKind::kArity, "monitoring point references unknown node " +
                                         std::to_string(c.node));
    }
  }
  if (contexts.size() == 1 && contexts[0].role == kSelfRole) {
    record(contexts[0].node, values);
    return;
  }
  auto [it, inserted] = point_index_.try_emplace(point_key(contexts), points_.size());
  if (inserted) {
    MonitoringPoint point;
    point.contexts = std::move(contexts);
    point.values.assign(metrics_.size(), std::nullopt);
    points_.push_back(std::move(point));
  }
  accumulate(points_[it->second].values, values);
}

std::size_t Profile::add_derived_metric(MetricDescriptor descriptor,
                                        std::vector<std::optional<double>> values) {
  if (find_metric(descriptor.name)) {
    throw Error(ErrorKind::kDuplicateMetric,
                "duplicate metric name '" + descriptor.name + "'");
  }
  if (values.size() != nodes_.size()) {
    throw Error(ErrorKind::kArity, "derived metric needs one value per node");
  }
  descriptor.kind = MetricKind::kDerived;
  metrics_.push_back(std::move(descriptor));
  Column col;
  col.reals = std::move(values);
  columns_.push_back(std::move(col));
  for (auto& p : points_) p.values.emplace_back();
  return metrics_.size() - 1;
}

Profile Profile::canonicalized() const {
  Profile out(meta_, {});
  out.metrics_ = metrics_;
  out.columns_.assign(metrics_.size(), Column{});
  // Rebuilt from scratch below, root included.
  out.nodes_.clear();
  out.child_index_.clear();
  out.frames_.clear();
  out.frame_index_.clear();

  std::vector<NodeId> remap(nodes_.size(), kNoNode);
  std::vector<FrameId> frame_remap(frames_.size(), kNoFrame);
  auto map_frame = [&](FrameId f) {
    if (frame_remap[f] == kNoFrame) {
      frame_remap[f] = static_cast<FrameId>(out.frames_.size());
      out.frames_.push_back(frames_[f]);
      out.frame_index_.emplace(frames_[f], frame_remap[f]);
    }
    return frame_remap[f];
  };

  // Iterative pre-order; children visited in frame order.
  std::vector<NodeId> stack{root()};
  std::vector<NodeId> kids;
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    const auto& src = nodes_[n];
    NodeId parent = src.parent == kNoNode ? kNoNode : remap[src.parent];
    NodeId id = out.append_node(parent, map_frame(src.frame), src.kind);
    remap[n] = id;
    for (std::size_t m = 0; m < metrics_.size(); ++m) {
      if (metrics_[m].kind == MetricKind::kDerived) {
        out.columns_[m].reals[id] = columns_[m].reals[n];
      } else {
        out.columns_[m].counts[id] = columns_[m].counts[n];
      }
    }
    kids.assign(src.children.begin(), src.children.end());
    std::sort(kids.begin(), kids.end(), [&](NodeId a, NodeId b) {
      return frames_[nodes_[a].frame] < frames_[nodes_[b].frame];
    });
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }

  for (const auto& p : points_) {
    MonitoringPoint q;
    q.values = p.values;
    for (const auto& c : p.contexts) q.contexts.push_back({c.role, remap[c.node]});
    std::size_t index = out.points_.size();
    if (q.contexts.size() == 1 && q.contexts[0].role == kSelfRole) {
      out.self_point_index_.emplace(q.contexts[0].node, index);
    } else {
      out.point_index_.emplace(point_key(q.contexts), index);
    }
    out.points_.push_back(std::move(q));
  }
  return out;
}

std::uint64_t total(const Profile& profile, std::size_t metric) {
  std::uint64_t sum = 0;
  for (NodeId n = 0; n < profile.node_count(); ++n) sum += profile.count(n, metric).value_or(0);
  return sum;
}

std::size_t default_metric(const Profile& profile) {
  auto metrics = profile.metrics();
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (metrics[i].kind == MetricKind::kAdditive) return i;
  }
  throw Error(ErrorKind::kUnknownMetric, "profile has no additive metric");
}

}  // namespace profcct
