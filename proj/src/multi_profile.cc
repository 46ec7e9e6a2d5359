#include "profcct/multi_profile.h"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include "profcct/error.h"

namespace profcct {

namespace {

template <typename Tree>
std::string label_of(const Tree& t, std::uint32_t node) {
  const auto& n = t.nodes[node];
  return view_label(n.role, n.frame == kNoFrame ? nullptr : &t.frames[n.frame], n.run);
}

template <typename Tree>
std::string function_name_of(const Tree& t, std::uint32_t node) {
  const auto& n = t.nodes[node];
  if (n.role != ViewRole::kFrame) return {};
  return display_name(t.frames[n.frame]);
}

template <typename Tree>
std::vector<std::string> path_labels_of(const Tree& t, std::uint32_t node) {
  std::vector<std::string> out;
  for (auto n = node; n != 0 && n != kNoNode; n = t.nodes[n].parent) out.push_back(label_of(t, n));
  std::reverse(out.begin(), out.end());
  return out;
}

// Children by descending value, then label, then identity.
template <typename Tree, typename Value>
void order_children(Tree& t, Value value) {
  auto less = [&](std::uint32_t a, std::uint32_t b) {
    auto va = value(a), vb = value(b);
    if (va != vb) return va > vb;
    std::string la = label_of(t, a), lb = label_of(t, b);
    if (la != lb) return la < lb;
    const auto& na = t.nodes[a];
    const auto& nb = t.nodes[b];
    if (na.role != nb.role) return na.role < nb.role;
    if (na.frame != nb.frame) {
      if (na.frame == kNoFrame || nb.frame == kNoFrame) return na.frame < nb.frame;
      return t.frames[na.frame] < t.frames[nb.frame];
    }
    if (na.run != nb.run) return na.run < nb.run;
    return a < b;
  };
  for (auto& n : t.nodes) {
    if (n.children.size() > 1) std::sort(n.children.begin(), n.children.end(), less);
  }
}

std::string profile_label(const Profile& p, std::size_t index) {
  return p.meta().name.empty() ? "#" + std::to_string(index + 1) : "'" + p.meta().name + "'";
}

void require_metric(const Profile& p, std::size_t index, std::string_view metric) {
  if (!p.find_metric(metric)) {
    throw Error(ErrorKind::kMetricMismatch, "profile " + profile_label(p, index) +
                                                " has no metric '" + std::string(metric) + "'");
  }
}

}  // namespace

UnifiedTree unify(const std::vector<const ViewTree*>& views) {
  UnifiedTree u;
  if (views.empty()) return u;
  std::unordered_map<Frame, FrameId, FrameHash> frame_index;
  auto intern = [&](const ViewTree& v, FrameId f) {
    if (f == kNoFrame) return kNoFrame;
    const Frame& frame = v.frames[f];
    auto [it, inserted] = frame_index.try_emplace(frame, static_cast<FrameId>(u.frames.size()));
    if (inserted) u.frames.push_back(frame);
    return it->second;
  };

  UnifiedNode root;
  root.role = ViewRole::kRoot;
  root.sources.assign(views.size(), kNoNode);
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (!views[i]->nodes.empty()) root.sources[i] = 0;
  }
  u.nodes.push_back(std::move(root));

  using Key = std::tuple<ViewRole, FrameId, std::uint32_t>;
  std::deque<std::uint32_t> queue{0};
  while (!queue.empty()) {
    std::uint32_t id = queue.front();
    queue.pop_front();
    std::map<Key, std::uint32_t> index;
    for (std::size_t i = 0; i < views.size(); ++i) {
      std::uint32_t src = u.nodes[id].sources[i];
      if (src == kNoNode) continue;
      const ViewTree& v = *views[i];
      for (auto c : v.children(src)) {
        const ViewNode& vn = v.nodes[c];
        Key key{vn.role, intern(v, vn.frame), vn.run};
        auto [it, inserted] = index.try_emplace(key, static_cast<std::uint32_t>(u.nodes.size()));
        if (inserted) {
          UnifiedNode n;
          n.role = vn.role;
          n.frame = std::get<1>(key);
          n.run = vn.run;
          n.parent = id;
          n.sources.assign(views.size(), kNoNode);
          u.nodes.push_back(std::move(n));
          u.nodes[id].children.push_back(it->second);
          queue.push_back(it->second);
        }
        u.nodes[it->second].sources[i] = c;
      }
    }
  }
  return u;
}

// ---- diff ----

std::string_view to_string(DiffTag tag) {
  switch (tag) {
    case DiffTag::kAdded: return "added";
    case DiffTag::kDeleted: return "deleted";
    case DiffTag::kIncreased: return "increased";
    case DiffTag::kDecreased: return "decreased";
    case DiffTag::kUnchanged: return "unchanged";
  }
  return "unchanged";
}

std::string_view tag_prefix(DiffTag tag) {
  switch (tag) {
    case DiffTag::kAdded: return "[A]";
    case DiffTag::kDeleted: return "[D]";
    case DiffTag::kIncreased: return "[+]";
    case DiffTag::kDecreased: return "[-]";
    case DiffTag::kUnchanged: return "";
  }
  return "";
}

std::optional<double> DiffTree::scaled_m2(std::uint32_t node) const {
  const auto& n = nodes[node];
  if (!n.m2) return std::nullopt;
  return static_cast<double>(*n.m2) * scale;
}

std::optional<double> DiffTree::delta(std::uint32_t node) const {
  const auto& n = nodes[node];
  if (!n.m1 || !n.m2) return std::nullopt;
  if (!normalized()) return static_cast<double>(*exact_delta(node));
  return *scaled_m2(node) - static_cast<double>(*n.m1);
}

std::optional<std::int64_t> DiffTree::exact_delta(std::uint32_t node) const {
  const auto& n = nodes[node];
  if (!n.m1 || !n.m2 || normalized()) return std::nullopt;
  return static_cast<std::int64_t>(*n.m2) - static_cast<std::int64_t>(*n.m1);
}

std::optional<double> DiffTree::ratio(std::uint32_t node) const {
  const auto& n = nodes[node];
  if (!n.m1 || !n.m2 || *n.m1 == 0) return std::nullopt;
  return *scaled_m2(node) / static_cast<double>(*n.m1);
}

double DiffTree::width(std::uint32_t node) const {
  const auto& n = nodes[node];
  return static_cast<double>(n.m1.value_or(0)) + scaled_m2(node).value_or(0.0);
}

std::string DiffTree::label(std::uint32_t node) const { return label_of(*this, node); }
std::string DiffTree::function_name(std::uint32_t node) const {
  return function_name_of(*this, node);
}
std::vector<std::string> DiffTree::path_labels(std::uint32_t node) const {
  return path_labels_of(*this, node);
}

DiffTree diff_views(const ViewTree& v1, const ViewTree& v2, bool normalize_by_total) {
  UnifiedTree u = unify({&v1, &v2});
  DiffTree d;
  d.kind = v1.kind;
  d.metric = v1.metric;
  d.frames = std::move(u.frames);
  if (normalize_by_total && v2.total() != 0 && v1.total() != v2.total()) {
    d.scale = static_cast<double>(v1.total()) / static_cast<double>(v2.total());
  }
  d.nodes.resize(u.nodes.size());
  for (std::uint32_t i = 0; i < u.nodes.size(); ++i) {
    const UnifiedNode& un = u.nodes[i];
    DiffNode& n = d.nodes[i];
    n.role = un.role;
    n.frame = un.frame;
    n.run = un.run;
    n.parent = un.parent;
    n.children = un.children;
    if (un.sources[0] != kNoNode) {
      n.m1 = v1.value(un.sources[0]);
      n.source1 = v1.nodes[un.sources[0]].source;
    }
    if (un.sources[1] != kNoNode) {
      n.m2 = v2.value(un.sources[1]);
      n.source2 = v2.nodes[un.sources[1]].source;
    }
    if (!n.m1) {
      n.tag = DiffTag::kAdded;
    } else if (!n.m2) {
      n.tag = DiffTag::kDeleted;
    } else {
      double delta = *d.delta(i);
      n.tag = delta > 0 ? DiffTag::kIncreased : delta < 0 ? DiffTag::kDecreased : DiffTag::kUnchanged;
    }
  }
  order_children(d, [&](std::uint32_t n) { return d.width(n); });
  return d;
}

DiffTree diff(const Profile& p1, const Profile& p2, std::string_view metric,
              const DiffOptions& options) {
  require_metric(p1, 0, metric);
  require_metric(p2, 1, metric);
  ViewTree v1 = compute_view(p1, metric, options.kind);
  ViewTree v2 = compute_view(p2, metric, options.kind);
  return diff_views(v1, v2, options.normalize_by_total);
}

// ---- aggregate ----

AggregateStats compute_stats(const std::vector<Count>& values) {
  AggregateStats s;
  for (const auto& v : values) {
    if (!v) continue;
    ++s.present;
    s.sum += *v;
    s.min = s.min ? std::min(*s.min, *v) : *v;
    s.max = s.max ? std::max(*s.max, *v) : *v;
  }
  if (s.present > 0) s.mean = static_cast<double>(s.sum) / static_cast<double>(s.present);
  return s;
}

std::optional<double> AggregateTree::primary(std::uint32_t node) const {
  const auto& s = nodes[node].stats;
  switch (aggregator) {
    case Aggregator::kSum: return static_cast<double>(s.sum);
    case Aggregator::kMin: return s.min ? std::optional<double>(static_cast<double>(*s.min)) : std::nullopt;
    case Aggregator::kMax: return s.max ? std::optional<double>(static_cast<double>(*s.max)) : std::nullopt;
    case Aggregator::kMean: return s.mean;
  }
  return std::nullopt;
}

std::string AggregateTree::label(std::uint32_t node) const { return label_of(*this, node); }
std::string AggregateTree::function_name(std::uint32_t node) const {
  return function_name_of(*this, node);
}
std::vector<std::string> AggregateTree::path_labels(std::uint32_t node) const {
  return path_labels_of(*this, node);
}

AggregateTree aggregate(const std::vector<const Profile*>& profiles, std::string_view metric,
                        const AggregateOptions& options) {
  if (profiles.empty()) throw Error(ErrorKind::kArity, "aggregate needs at least one profile");
  for (std::size_t i = 0; i < profiles.size(); ++i) require_metric(*profiles[i], i, metric);

  std::vector<ViewTree> views;
  views.reserve(profiles.size());
  for (const auto* p : profiles) views.push_back(compute_view(*p, metric, options.kind));
  std::vector<const ViewTree*> refs;
  for (const auto& v : views) refs.push_back(&v);
  UnifiedTree u = unify(refs);

  AggregateTree t;
  t.kind = options.kind;
  t.metric = std::string(metric);
  t.aggregator = profiles[0]->metrics()[profiles[0]->metric_index(metric)].aggregator;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& name = profiles[i]->meta().name;
    t.inputs.push_back(name.empty() ? "#" + std::to_string(i + 1) : name);
  }
  t.frames = std::move(u.frames);
  t.nodes.resize(u.nodes.size());
  for (std::uint32_t i = 0; i < u.nodes.size(); ++i) {
    const UnifiedNode& un = u.nodes[i];
    AggregateNode& n = t.nodes[i];
    n.role = un.role;
    n.frame = un.frame;
    n.run = un.run;
    n.parent = un.parent;
    n.children = un.children;
    n.values.resize(views.size());
    for (std::size_t k = 0; k < views.size(); ++k) {
      if (un.sources[k] != kNoNode) {
        n.values[k] = views[k].value(un.sources[k]);
      } else if (options.missing_as_zero) {
        n.values[k] = 0;
      }
    }
    n.stats = compute_stats(n.values);
  }
  order_children(t, [&](std::uint32_t n) { return t.value(n); });
  return t;
}

std::vector<Count> histogram(const AggregateTree& tree, std::uint32_t node) {
  if (node >= tree.nodes.size()) {
    throw Error(ErrorKind::kUnknownPath, "no node " + std::to_string(node) + " in the aggregate");
  }
  return tree.nodes[node].values;
}

std::vector<Count> histogram(const AggregateTree& tree, const std::vector<std::string>& path) {
  std::uint32_t cur = 0;
  for (const auto& label : path) {
    std::uint32_t next = kNoNode;
    for (auto c : tree.nodes[cur].children) {
      if (tree.label(c) == label) {
        next = c;
        break;
      }
    }
    if (next == kNoNode) {
      std::string joined;
      for (const auto& l : path) joined += (joined.empty() ? "" : ";") + l;
      throw Error(ErrorKind::kUnknownPath, "no path '" + joined + "' in the aggregate");
    }
    cur = next;
  }
  return tree.nodes[cur].values;
}

// ---- correlation ----

std::vector<std::string> roles(const Profile& profile) {
  std::set<std::string> out;
  for (const auto& p : profile.points()) {
    for (const auto& c : p.contexts) out.insert(c.role);
  }
  return {out.begin(), out.end()};
}

Profile correlate(const Profile& profile, NodeId anchor, std::string_view from_role,
                  std::string_view to_role) {
  auto known = roles(profile);
  for (auto role : {from_role, to_role}) {
    if (!std::binary_search(known.begin(), known.end(), std::string(role))) {
      throw Error(ErrorKind::kUnknownRole, "no monitoring point carries role '" + std::string(role) + "'");
    }
  }
  if (anchor >= profile.node_count()) {
    throw Error(ErrorKind::kUnknownPath, "no node " + std::to_string(anchor) + " in the profile");
  }

  std::vector<MetricDescriptor> metrics;
  std::vector<std::size_t> columns;
  for (std::size_t m = 0; m < profile.metrics().size(); ++m) {
    if (profile.metrics()[m].kind == MetricKind::kDerived) continue;
    metrics.push_back(profile.metrics()[m]);
    columns.push_back(m);
  }
  ProfileMeta meta;
  meta.name = profile.meta().name + ":" + std::string(from_role) + "->" + std::string(to_role);
  meta.collector = profile.meta().collector;
  meta.timestamp = profile.meta().timestamp;
  Profile out(std::move(meta), std::move(metrics));

  std::vector<Count> values(columns.size());
  std::vector<Frame> stack;
  for (const auto& point : profile.points()) {
    auto from = std::find_if(point.contexts.begin(), point.contexts.end(), [&](const RoleContext& c) {
      return c.role == from_role && c.node == anchor;
    });
    if (from == point.contexts.end()) continue;
    for (std::size_t k = 0; k < columns.size(); ++k) values[k] = point.values[columns[k]];

    auto to = std::find_if(point.contexts.begin(), point.contexts.end(),
                           [&](const RoleContext& c) { return c.role == to_role; });
    if (to == point.contexts.end() || to->node == profile.root()) {
      out.record(out.root(), values);
      continue;
    }
    stack.clear();
    for (auto f : profile.path(to->node)) stack.push_back(profile.frame(f));
    out.add_sample(stack, values, profile.node(to->node).kind);
  }
  return out;
}

}  // namespace profcct
