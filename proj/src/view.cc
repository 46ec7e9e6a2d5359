#include "profcct/view.h"

#include <algorithm>
#include <cctype>
#include <map>
#include <tuple>
#include <unordered_map>

#include "profcct/error.h"

namespace profcct {

namespace {

constexpr std::string_view kOtherLabel = "\xC2\xAB" "other" "\xC2\xBB";
constexpr std::string_view kDeepLabel = "\xC2\xAB" "deep" "\xC2\xBB";
constexpr std::string_view kUnknownLabel = "\xC2\xAB" "unknown" "\xC2\xBB";
constexpr std::string_view kTimes = "\xC3\x97";  // multiplication sign

ViewTree empty_like(const ViewTree& t) {
  ViewTree out;
  out.kind = t.kind;
  out.metric = t.metric;
  out.basis = t.basis;
  out.frames = t.frames;
  return out;
}

// Appends a node under `parent`; child lists are built later by link().
std::uint32_t push_node(ViewTree& t, ViewNode node, std::uint32_t parent) {
  auto id = static_cast<std::uint32_t>(t.nodes.size());
  node.parent = parent;
  t.nodes.push_back(node);
  return id;
}

ViewNode synthetic(ViewRole role, std::uint64_t inclusive, std::uint64_t exclusive) {
  ViewNode n;
  n.role = role;
  n.inclusive = inclusive;
  n.exclusive = exclusive;
  return n;
}

// Child lists from parent links, in id order.
void link(ViewTree& t) {
  const auto n = t.nodes.size();
  t.child_offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (t.nodes[i].parent != kNoNode) ++t.child_offsets[t.nodes[i].parent + 1];
  }
  for (std::size_t i = 0; i < n; ++i) t.child_offsets[i + 1] += t.child_offsets[i];
  t.child_ids.resize(t.child_offsets[n]);
  // Filling advances offsets[p] to the start of p + 1; shift them back after.
  for (std::size_t i = 0; i < n; ++i) {
    auto p = t.nodes[i].parent;
    if (p != kNoNode) t.child_ids[t.child_offsets[p]++] = static_cast<std::uint32_t>(i);
  }
  for (std::size_t i = n; i > 0; --i) t.child_offsets[i] = t.child_offsets[i - 1];
  t.child_offsets[0] = 0;
}

// Child order: descending value, then label, then identity.
class ChildOrder {
 public:
  explicit ChildOrder(const ViewTree& t) : t_(t), names_(t.frames.size()) {
    for (FrameId f = 0; f < t.frames.size(); ++f) names_[f] = display_name(t.frames[f]);
  }

  bool operator()(std::uint32_t a, std::uint32_t b) const {
    std::uint64_t va = t_.value(a), vb = t_.value(b);
    if (va != vb) return va > vb;
    const ViewNode& na = t_.nodes[a];
    const ViewNode& nb = t_.nodes[b];
    int c = label(na, scratch_a_).compare(label(nb, scratch_b_));
    if (c != 0) return c < 0;
    if (na.role != nb.role) return na.role < nb.role;
    if (na.frame != nb.frame) {
      if (na.frame == kNoFrame || nb.frame == kNoFrame) return na.frame < nb.frame;
      return t_.frames[na.frame] < t_.frames[nb.frame];
    }
    if (na.run != nb.run) return na.run < nb.run;
    return a < b;
  }

 private:
  std::string_view label(const ViewNode& n, std::string& scratch) const {
    if (n.role == ViewRole::kFrame && n.run == 1) return names_[n.frame];
    scratch = view_label(n.role, n.frame == kNoFrame ? nullptr : &t_.frames[n.frame], n.run);
    return scratch;
  }

  const ViewTree& t_;
  std::vector<std::string> names_;
  mutable std::string scratch_a_, scratch_b_;
};

void sort_children(ViewTree& t) {
  ChildOrder order(t);
  auto less = [&order](std::uint32_t a, std::uint32_t b) { return order(a, b); };
  for (std::size_t n = 0; n < t.nodes.size(); ++n) {
    auto first = t.child_ids.begin() + t.child_offsets[n];
    auto last = t.child_ids.begin() + t.child_offsets[n + 1];
    if (last - first > 1 && !std::is_sorted(first, last, less)) std::sort(first, last, less);
  }
}

void finish(ViewTree& t) {
  link(t);
  sort_children(t);
}

using NodeKey = std::tuple<ViewRole, FrameId, std::uint32_t>;

NodeKey key_of(const ViewNode& n) { return {n.role, n.frame, n.run}; }

// Copies `scratch` merging siblings with equal identity (summing values and
// merging their subtrees), then orders children.
ViewTree rebuild_merged(ViewTree scratch) {
  link(scratch);
  ViewTree out = empty_like(scratch);
  out.nodes.reserve(scratch.nodes.size());

  auto build = [&](auto&& self, const std::vector<std::uint32_t>& group,
                   std::uint32_t parent) -> void {
    const ViewNode& first = scratch.nodes[group.front()];
    ViewNode node;
    node.role = first.role;
    node.frame = first.frame;
    node.run = first.run;
    node.source = group.size() == 1 ? first.source : kNoNode;
    for (auto g : group) {
      node.inclusive += scratch.nodes[g].inclusive;
      node.exclusive += scratch.nodes[g].exclusive;
    }
    std::uint32_t id = push_node(out, node, parent);

    std::vector<std::vector<std::uint32_t>> groups;
    std::map<NodeKey, std::size_t> index;
    for (auto g : group) {
      for (auto c : scratch.children(g)) {
        auto [it, inserted] = index.try_emplace(key_of(scratch.nodes[c]), groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(c);
      }
    }
    for (const auto& sub : groups) self(self, sub, id);
  };
  if (!scratch.nodes.empty()) build(build, {0}, kNoNode);
  finish(out);
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Depth-first walk over the CCT calling enter(node) and exit(node).
template <typename Enter, typename Exit>
void walk_profile(const Profile& p, Enter&& enter, Exit&& exit) {
  std::vector<std::pair<NodeId, std::size_t>> stack;
  enter(p.root());
  stack.emplace_back(p.root(), 0);
  while (!stack.empty()) {
    NodeId n = stack.back().first;
    std::size_t i = stack.back().second;
    const auto& children = p.node(n).children;
    if (i < children.size()) {
      ++stack.back().second;
      NodeId c = children[i];
      enter(c);
      stack.emplace_back(c, 0);
    } else {
      exit(n);
      stack.pop_back();
    }
  }
}

std::vector<std::uint64_t> inclusive_values(const Profile& p, std::size_t metric) {
  std::vector<std::uint64_t> incl(p.node_count());
  for (NodeId n = 0; n < p.node_count(); ++n) incl[n] = p.count(n, metric).value_or(0);
  for (NodeId n = static_cast<NodeId>(p.node_count()); n-- > 1;) incl[p.node(n).parent] += incl[n];
  return incl;
}

class FrameTable {
 public:
  explicit FrameTable(std::vector<Frame>& frames) : frames_(frames) {}
  FrameId intern(const Frame& f) {
    auto [it, inserted] = index_.try_emplace(f, static_cast<FrameId>(frames_.size()));
    if (inserted) frames_.push_back(f);
    return it->second;
  }

 private:
  std::vector<Frame>& frames_;
  std::unordered_map<Frame, FrameId, FrameHash> index_;
};

ViewTree top_down(const Profile& p, std::size_t metric) {
  ViewTree t;
  t.kind = ViewKind::kTopDown;
  t.metric = p.metrics()[metric].name;
  t.basis = WidthBasis::kInclusive;
  t.frames.assign(p.frames().begin(), p.frames().end());
  t.nodes.resize(p.node_count());
  const bool snapshot = p.metrics()[metric].kind == MetricKind::kSnapshot;
  for (NodeId n = 0; n < p.node_count(); ++n) {
    const ContextNode& src = p.node(n);
    ViewNode& v = t.nodes[n];
    v.role = n == p.root() ? ViewRole::kRoot : ViewRole::kFrame;
    v.frame = src.frame;
    v.source = n;
    v.parent = src.parent;
    v.exclusive = p.count(n, metric).value_or(0);
    v.inclusive = v.exclusive;
  }
  if (!snapshot) {
    for (NodeId n = static_cast<NodeId>(p.node_count()); n-- > 1;) {
      t.nodes[t.nodes[n].parent].inclusive += t.nodes[n].inclusive;
    }
  }
  finish(t);
  return t;
}

ViewTree bottom_up(const Profile& p, std::size_t metric, BottomUpMode mode) {
  ViewTree t;
  t.kind = ViewKind::kBottomUp;
  t.metric = p.metrics()[metric].name;
  t.basis = mode == BottomUpMode::kExclusive ? WidthBasis::kExclusive : WidthBasis::kInclusive;
  FrameTable table(t.frames);

  std::vector<FrameId> fn_of(p.frames().size());
  for (FrameId f = 0; f < p.frames().size(); ++f) fn_of[f] = table.intern(function_of(p.frame(f)));

  const auto incl = inclusive_values(p, metric);
  // A function's subtree cost is taken at its outermost activation only, so
  // recursion does not count it twice.
  std::vector<bool> outermost(p.node_count(), false);
  {
    std::vector<std::uint32_t> active(t.frames.size(), 0);
    walk_profile(
        p,
        [&](NodeId n) {
          if (n == p.root()) return;
          auto f = fn_of[p.node(n).frame];
          outermost[n] = active[f]++ == 0;
        },
        [&](NodeId n) {
          if (n != p.root()) --active[fn_of[p.node(n).frame]];
        });
  }

  // Every CCT node with cost becomes an item whose cursor climbs its caller
  // chain one level per bottom-up depth.
  struct Item {
    NodeId cursor;
    FrameId key;
    std::uint64_t self;
    std::uint64_t subtree;
  };
  std::vector<Item> items;
  std::vector<std::uint32_t> depth(p.node_count(), 0);
  std::size_t bound = 1;  // each item yields at most one node per caller level
  ViewNode root = synthetic(ViewRole::kRoot, 0, p.count(p.root(), metric).value_or(0));
  for (NodeId n = 1; n < p.node_count(); ++n) {
    depth[n] = depth[p.node(n).parent] + 1;
    std::uint64_t self = p.count(n, metric).value_or(0);
    std::uint64_t subtree = outermost[n] ? incl[n] : 0;
    if ((t.basis == WidthBasis::kExclusive ? self : subtree) == 0) continue;
    root.exclusive += self;
    root.inclusive += subtree;
    bound += depth[n];
    items.push_back({n, fn_of[p.node(n).frame], self, subtree});
  }
  depth = {};
  t.nodes.reserve(bound);
  push_node(t, root, kNoNode);

  auto add = [&](std::uint32_t parent, FrameId fn, std::uint64_t self, std::uint64_t subtree) {
    ViewNode v;
    v.frame = fn;
    v.exclusive = self;
    v.inclusive = subtree;
    return push_node(t, v, parent);
  };
  // Items in [first, last) share `node`; their cursors stand at its CCT level.
  struct Range {
    std::uint32_t node;
    std::size_t first, last;
  };
  std::vector<Range> work;
  auto split = [&](std::uint32_t node, std::size_t first, std::size_t last) {
    auto begin = items.begin() + static_cast<std::ptrdiff_t>(first);
    auto end = items.begin() + static_cast<std::ptrdiff_t>(last);
    std::sort(begin, end, [](const Item& a, const Item& b) { return a.key < b.key; });
    for (auto g = begin; g != end;) {
      auto h = g;
      std::uint64_t self = 0, subtree = 0;
      for (; h != end && h->key == g->key; ++h) {
        self += h->self;
        subtree += h->subtree;
      }
      work.push_back({add(node, g->key, self, subtree), static_cast<std::size_t>(g - items.begin()),
                      static_cast<std::size_t>(h - items.begin())});
      g = h;
    }
  };
  split(0, 0, items.size());
  while (!work.empty()) {
    Range r = work.back();
    work.pop_back();
    if (r.last - r.first == 1) {
      // A lone caller chain: copy it straight down.
      Item& it = items[r.first];
      std::uint32_t node = r.node;
      for (NodeId c = p.node(it.cursor).parent; c != p.root(); c = p.node(c).parent) {
        node = add(node, fn_of[p.node(c).frame], it.self, it.subtree);
      }
      continue;
    }
    std::size_t live = r.last;
    for (std::size_t i = r.first; i < live;) {
      Item& it = items[i];
      it.cursor = p.node(it.cursor).parent;
      if (it.cursor == p.root()) {
        std::swap(it, items[--live]);
      } else {
        it.key = fn_of[p.node(it.cursor).frame];
        ++i;
      }
    }
    if (live > r.first) split(r.node, r.first, live);
  }
  finish(t);
  return t;
}

ViewTree flat(const Profile& p, std::size_t metric) {
  ViewTree t;
  t.kind = ViewKind::kFlat;
  t.metric = p.metrics()[metric].name;
  t.basis = WidthBasis::kExclusive;
  FrameTable table(t.frames);
  const auto incl = inclusive_values(p, metric);

  std::uint64_t sum = 0;
  for (NodeId n = 0; n < p.node_count(); ++n) sum += p.count(n, metric).value_or(0);
  t.nodes.push_back(synthetic(ViewRole::kRoot, sum, sum));

  // View nodes for (module, file, function) of every CCT frame.
  struct Chain {
    std::uint32_t module = kNoNode, file = kNoNode, function = kNoNode;
  };
  std::vector<Chain> chain_of(p.frames().size());
  std::map<std::pair<ViewRole, FrameId>, std::uint32_t> group_index;
  auto group = [&](ViewRole role, const Frame& key, std::uint32_t parent) {
    FrameId f = table.intern(key);
    auto [it, inserted] = group_index.try_emplace({role, f}, 0);
    if (inserted) {
      ViewNode v;
      v.role = role;
      v.frame = f;
      it->second = push_node(t, std::move(v), parent);
    }
    return it->second;
  };
  std::vector<bool> used(p.frames().size(), false);
  for (NodeId n = 1; n < p.node_count(); ++n) used[p.node(n).frame] = true;
  for (FrameId f = 0; f < p.frames().size(); ++f) {
    if (!used[f]) continue;
    const Frame& frame = p.frame(f);
    Frame module_key;
    module_key.module_name = frame.module_name;
    Frame file_key = module_key;
    file_key.file_path = frame.file_path;
    Chain c;
    c.module = group(ViewRole::kModule, module_key, 0);
    c.file = group(ViewRole::kFile, file_key, c.module);
    c.function = group(ViewRole::kFrame, function_of(frame), c.file);
    chain_of[f] = c;
  }

  for (NodeId n = 1; n < p.node_count(); ++n) {
    std::uint64_t self = p.count(n, metric).value_or(0);
    const Chain& c = chain_of[p.node(n).frame];
    t.nodes[c.function].exclusive += self;
    t.nodes[c.file].exclusive += self;
    t.nodes[c.module].exclusive += self;
  }

  // Union counting: a sample adds to a group once however often the group
  // repeats on its stack, so credit only the outermost occurrence.
  std::vector<std::uint32_t> active(t.nodes.size(), 0);
  walk_profile(
      p,
      [&](NodeId n) {
        if (n == p.root()) return;
        const Chain& c = chain_of[p.node(n).frame];
        for (auto v : {c.module, c.file, c.function}) {
          if (active[v]++ == 0) t.nodes[v].inclusive += incl[n];
        }
      },
      [&](NodeId n) {
        if (n == p.root()) return;
        const Chain& c = chain_of[p.node(n).frame];
        for (auto v : {c.module, c.file, c.function}) --active[v];
      });
  finish(t);
  return t;
}

}  // namespace

std::string_view to_string(ViewKind kind) {
  switch (kind) {
    case ViewKind::kTopDown: return "topdown";
    case ViewKind::kBottomUp: return "bottomup";
    case ViewKind::kFlat: return "flat";
  }
  return "topdown";
}

std::optional<ViewKind> parse_view_kind(std::string_view text) {
  if (text == "topdown" || text == "top_down" || text == "top-down") return ViewKind::kTopDown;
  if (text == "bottomup" || text == "bottom_up" || text == "bottom-up") return ViewKind::kBottomUp;
  if (text == "flat") return ViewKind::kFlat;
  return std::nullopt;
}

std::string view_label(ViewRole role, const Frame* frame, std::uint32_t run) {
  switch (role) {
    case ViewRole::kRoot: return std::string(kRootName);
    case ViewRole::kOther: return std::string(kOtherLabel);
    case ViewRole::kDeep: return std::string(kDeepLabel);
    case ViewRole::kModule:
      return frame->module_name.empty() ? std::string(kUnknownLabel) : frame->module_name;
    case ViewRole::kFile:
      return frame->file_path.empty() ? std::string(kUnknownLabel) : frame->file_path;
    case ViewRole::kFrame: {
      std::string s = display_name(*frame);
      if (run > 1) {
        s += " (";
        s += kTimes;
        s += std::to_string(run);
        s += ')';
      }
      return s;
    }
  }
  return {};
}

std::string ViewTree::label(std::uint32_t node) const {
  const ViewNode& n = nodes[node];
  return view_label(n.role, n.frame == kNoFrame ? nullptr : &frames[n.frame], n.run);
}

std::string ViewTree::function_name(std::uint32_t node) const {
  const ViewNode& n = nodes[node];
  if (n.role != ViewRole::kFrame) return {};
  return display_name(frames[n.frame]);
}

std::vector<std::string> ViewTree::path_labels(std::uint32_t node) const {
  std::vector<std::string> out;
  for (auto n = node; n != 0 && n != kNoNode; n = nodes[n].parent) out.push_back(label(n));
  std::reverse(out.begin(), out.end());
  return out;
}

std::size_t ViewTree::depth(std::uint32_t node) const {
  std::size_t d = 0;
  for (auto n = node; n != 0 && n != kNoNode; n = nodes[n].parent) ++d;
  return d;
}

ViewTree compute_view(const Profile& profile, std::string_view metric, ViewKind kind,
                      const ViewOptions& options) {
  std::size_t m = profile.metric_index(metric);
  MetricKind mk = profile.metrics()[m].kind;
  if (mk == MetricKind::kDerived) {
    throw Error(ErrorKind::kUnknownMetricSemantics,
                "derived metric '" + std::string(metric) + "' cannot be summed into a view");
  }
  if (mk == MetricKind::kSnapshot && kind != ViewKind::kTopDown) {
    throw Error(ErrorKind::kUnknownMetricSemantics,
                "snapshot metric '" + std::string(metric) + "' only supports the top-down view");
  }
  switch (kind) {
    case ViewKind::kTopDown: return top_down(profile, m);
    case ViewKind::kBottomUp: return bottom_up(profile, m, options.bottom_up);
    case ViewKind::kFlat: return flat(profile, m);
  }
  return top_down(profile, m);
}

void traverse(const ViewTree& tree, TraversalOrder order,
              const std::function<void(std::uint32_t, std::size_t)>& visit) {
  if (tree.nodes.empty()) return;
  struct Entry {
    std::uint32_t node;
    std::size_t next;
  };
  std::vector<Entry> stack{{0, 0}};
  if (order == TraversalOrder::kPre) visit(0, 0);
  while (!stack.empty()) {
    auto& top = stack.back();
    auto children = tree.children(top.node);
    if (top.next < children.size()) {
      std::uint32_t c = children[top.next++];
      if (order == TraversalOrder::kPre) visit(c, stack.size());
      stack.push_back({c, 0});
    } else {
      std::uint32_t n = top.node;
      stack.pop_back();
      if (order == TraversalOrder::kPost) visit(n, stack.size());
    }
  }
}

void traverse(const Profile& profile, TraversalOrder order,
              const std::function<void(NodeId, std::size_t)>& visit) {
  std::size_t depth = 0;
  walk_profile(
      profile,
      [&](NodeId n) {
        if (order == TraversalOrder::kPre) visit(n, depth);
        ++depth;
      },
      [&](NodeId n) {
        --depth;
        if (order == TraversalOrder::kPost) visit(n, depth);
      });
}

ViewTree apply_visitor(const ViewTree& tree, TraversalOrder order, const Visitor& visitor) {
  if (tree.nodes.empty()) return tree;
  std::vector<Directive> directives(tree.nodes.size(), Directive::kKeep);
  traverse(tree, order, [&](std::uint32_t n, std::size_t depth) {
    directives[n] = visitor(tree, n, depth);
  });

  ViewTree scratch = empty_like(tree);
  std::vector<std::uint32_t> mapped(tree.nodes.size(), kNoNode);
  mapped[0] = push_node(scratch, tree.nodes[0], kNoNode);

  auto same_line = [&](std::uint32_t a, std::uint32_t b) {
    const ViewNode& na = tree.nodes[a];
    const ViewNode& nb = tree.nodes[b];
    if (na.frame == kNoFrame || nb.frame == kNoFrame) return false;
    const Frame& fa = tree.frames[na.frame];
    const Frame& fb = tree.frames[nb.frame];
    return fa.line != 0 && !fa.file_path.empty() && fa.file_path == fb.file_path &&
           fa.line == fb.line;
  };

  auto build = [&](auto&& self, std::uint32_t src, std::uint32_t dst) -> void {
    auto children = tree.children(src);
    for (std::size_t i = 0; i < children.size(); ++i) {
      std::uint32_t c = children[i];
      const ViewNode& node = tree.nodes[c];
      switch (directives[c]) {
        case Directive::kKeep:
          mapped[c] = push_node(scratch, node, dst);
          self(self, c, mapped[c]);
          break;
        case Directive::kElide:
          // Only top-down exclusive values are self costs; elsewhere the
          // parent's values already cover the elided node.
          if (tree.kind == ViewKind::kTopDown) scratch.nodes[dst].exclusive += node.exclusive;
          self(self, c, dst);
          break;
        case Directive::kMergeWithPreviousSibling: {
          if (i == 0 || mapped[children[i - 1]] == kNoNode) {
            throw Error(ErrorKind::kMerge, "'" + tree.label(c) + "' has no previous sibling to merge with");
          }
          std::uint32_t prev = children[i - 1];
          if (!same_line(c, prev)) {
            throw Error(ErrorKind::kMerge, "'" + tree.label(c) + "' and '" + tree.label(prev) +
                                               "' do not map to the same source line");
          }
          std::uint32_t target = mapped[prev];
          scratch.nodes[target].inclusive += node.inclusive;
          scratch.nodes[target].exclusive += node.exclusive;
          scratch.nodes[target].source = kNoNode;
          mapped[c] = target;
          self(self, c, target);
          break;
        }
      }
    }
  };
  build(build, 0, mapped[0]);
  return rebuild_merged(scratch);
}

ViewTree collapse_recursion(const ViewTree& tree) {
  if (tree.nodes.empty()) return tree;
  std::vector<FrameId> fn_key(tree.frames.size());
  {
    std::unordered_map<Frame, FrameId, FrameHash> index;
    for (FrameId f = 0; f < tree.frames.size(); ++f) {
      fn_key[f] = index.try_emplace(function_of(tree.frames[f]), f).first->second;
    }
  }
  auto same_function = [&](const ViewNode& a, const ViewNode& b) {
    return a.role == ViewRole::kFrame && b.role == ViewRole::kFrame &&
           fn_key[a.frame] == fn_key[b.frame];
  };

  ViewTree scratch = empty_like(tree);
  auto build = [&](auto&& self, std::uint32_t head, std::uint32_t dst) -> void {
    const ViewNode& h = tree.nodes[head];
    ViewNode node = h;
    node.exclusive = 0;
    std::uint32_t longest = 0;
    std::vector<std::uint32_t> outside;
    // (member, run length from head through member)
    std::vector<std::pair<std::uint32_t, std::uint32_t>> run{{head, h.run}};
    while (!run.empty()) {
      auto [member, length] = run.back();
      run.pop_back();
      longest = std::max(longest, length);
      node.exclusive += tree.nodes[member].exclusive;
      for (auto c : tree.children(member)) {
        if (h.role == ViewRole::kFrame && same_function(h, tree.nodes[c])) {
          run.emplace_back(c, length + tree.nodes[c].run);
        } else {
          outside.push_back(c);
        }
      }
    }
    // Bottom-up values are carried down the chain, so the head already
    // covers the run.
    if (tree.kind != ViewKind::kTopDown) node.exclusive = h.exclusive;
    node.run = longest;
    if (longest != h.run) node.source = kNoNode;
    std::uint32_t id = push_node(scratch, std::move(node), dst);
    for (auto c : outside) self(self, c, id);
  };
  build(build, 0, kNoNode);
  return rebuild_merged(scratch);
}

namespace {

// Copies `tree`, letting `cut(node, depth)` decide whether a child subtree is
// replaced by a residual node of the given role.
template <typename Cut>
ViewTree rebuild_with_residuals(const ViewTree& tree, ViewRole residual, Cut&& cut) {
  ViewTree out = empty_like(tree);
  out.nodes.reserve(tree.nodes.size());
  auto build = [&](auto&& self, std::uint32_t src, std::uint32_t dst, std::size_t depth) -> void {
    std::uint64_t removed_incl = 0, removed_excl = 0;
    bool removed = false;
    for (auto c : tree.children(src)) {
      if (cut(c, depth + 1)) {
        removed = true;
        removed_incl += tree.nodes[c].inclusive;
        removed_excl += tree.nodes[c].exclusive;
        continue;
      }
      std::uint32_t id = push_node(out, tree.nodes[c], dst);
      self(self, c, id, depth + 1);
    }
    if (removed) {
      // A top-down residual is a leaf, so its self cost is its whole value.
      std::uint64_t excl = tree.kind == ViewKind::kTopDown ? removed_incl : removed_excl;
      push_node(out, synthetic(residual, removed_incl, excl), dst);
    }
  };
  std::uint32_t root = push_node(out, tree.nodes[0], kNoNode);
  build(build, 0, root, 0);
  finish(out);
  return out;
}

}  // namespace

ViewTree prune(const ViewTree& tree, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorKind::kRange, "prune threshold must be within [0, 1]");
  }
  if (tree.nodes.empty()) return tree;
  const long double limit = static_cast<long double>(threshold) * tree.total();
  return rebuild_with_residuals(tree, ViewRole::kOther, [&](std::uint32_t n, std::size_t) {
    return threshold >= 1.0 || static_cast<long double>(tree.value(n)) < limit;
  });
}

ViewTree truncate_depth(const ViewTree& tree, std::size_t max_depth) {
  if (tree.nodes.empty()) return tree;
  return rebuild_with_residuals(tree, ViewRole::kDeep, [&](std::uint32_t, std::size_t depth) {
    return depth > max_depth;
  });
}

std::vector<std::uint32_t> search(const ViewTree& tree, std::string_view query) {
  if (query.empty()) throw Error(ErrorKind::kEmptyQuery, "search query is empty");
  std::string needle = lower(query);
  std::vector<std::uint32_t> hits;
  for (std::uint32_t n = 0; n < tree.nodes.size(); ++n) {
    if (tree.nodes[n].role != ViewRole::kFrame) continue;
    if (lower(tree.function_name(n)).find(needle) != std::string::npos) hits.push_back(n);
  }
  return hits;
}

std::optional<std::uint32_t> find_path(const ViewTree& tree,
                                       const std::vector<std::string>& labels) {
  if (tree.nodes.empty()) return std::nullopt;
  std::uint32_t cur = 0;
  for (const auto& l : labels) {
    std::optional<std::uint32_t> next;
    for (auto c : tree.children(cur)) {
      if (tree.label(c) == l) {
        next = c;
        break;
      }
    }
    if (!next) return std::nullopt;
    cur = *next;
  }
  return cur;
}

}  // namespace profcct
