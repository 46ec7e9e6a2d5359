#include "profcct/layout.h"

#include <functional>
#include <map>
#include <unordered_map>

#include "json_writer.h"
#include "profcct/error.h"

namespace profcct {

namespace {

using detail::JsonWriter;

std::optional<SourceLink> source_of(const std::vector<Frame>& frames, ViewRole role, FrameId f) {
  if (f == kNoFrame || (role != ViewRole::kFrame && role != ViewRole::kFile)) return std::nullopt;
  const Frame& frame = frames[f];
  if (frame.file_path.empty()) return std::nullopt;
  return SourceLink{frame.file_path, role == ViewRole::kFrame ? frame.line : 0};
}

std::string module_of(const std::vector<Frame>& frames, FrameId f) {
  return f == kNoFrame ? std::string() : frames[f].module_name;
}

struct ViewAdapter {
  const ViewTree& t;
  std::size_t size() const { return t.nodes.size(); }
  std::uint32_t parent(std::uint32_t n) const { return t.nodes[n].parent; }
  std::span<const std::uint32_t> children(std::uint32_t n) const { return t.children(n); }
  long double width(std::uint32_t n) const { return static_cast<long double>(t.value(n)); }
  std::string label(std::uint32_t n) const { return t.label(n); }
  std::string function_name(std::uint32_t n) const { return t.function_name(n); }
  std::string color(std::uint32_t n) const { return module_of(t.frames, t.nodes[n].frame); }
  std::optional<DiffTag> tag(std::uint32_t) const { return std::nullopt; }
  std::optional<SourceLink> source(std::uint32_t n) const {
    return source_of(t.frames, t.nodes[n].role, t.nodes[n].frame);
  }
  NodeId context(std::uint32_t n) const { return t.nodes[n].source; }
  void write_value(JsonWriter& w, std::uint32_t n) const { w.value(t.value(n)); }
  void write_self(JsonWriter& w, std::uint32_t n) const {
    const auto& node = t.nodes[n];
    w.value(t.basis == WidthBasis::kInclusive ? node.exclusive : node.inclusive);
  }
};

struct DiffAdapter {
  const DiffTree& t;
  std::size_t size() const { return t.nodes.size(); }
  std::uint32_t parent(std::uint32_t n) const { return t.nodes[n].parent; }
  const std::vector<std::uint32_t>& children(std::uint32_t n) const { return t.nodes[n].children; }
  long double width(std::uint32_t n) const {
    const auto& node = t.nodes[n];
    return static_cast<long double>(node.m1.value_or(0)) +
           static_cast<long double>(node.m2.value_or(0)) * t.scale;
  }
  std::string label(std::uint32_t n) const {
    auto prefix = tag_prefix(t.nodes[n].tag);
    return prefix.empty() ? t.label(n) : std::string(prefix) + " " + t.label(n);
  }
  std::string function_name(std::uint32_t n) const { return t.function_name(n); }
  std::string color(std::uint32_t n) const { return std::string(to_string(t.nodes[n].tag)); }
  std::optional<DiffTag> tag(std::uint32_t n) const { return t.nodes[n].tag; }
  std::optional<SourceLink> source(std::uint32_t n) const {
    return source_of(t.frames, t.nodes[n].role, t.nodes[n].frame);
  }
  NodeId context(std::uint32_t) const { return kNoNode; }
  void write_value(JsonWriter& w, std::uint32_t n) const { w.value(t.width(n)); }
  void write_self(JsonWriter& w, std::uint32_t) const { w.null(); }
};

struct AggregateAdapter {
  const AggregateTree& t;
  std::size_t size() const { return t.nodes.size(); }
  std::uint32_t parent(std::uint32_t n) const { return t.nodes[n].parent; }
  const std::vector<std::uint32_t>& children(std::uint32_t n) const { return t.nodes[n].children; }
  long double width(std::uint32_t n) const { return static_cast<long double>(t.value(n)); }
  std::string label(std::uint32_t n) const { return t.label(n); }
  std::string function_name(std::uint32_t n) const { return t.function_name(n); }
  std::string color(std::uint32_t n) const { return module_of(t.frames, t.nodes[n].frame); }
  std::optional<DiffTag> tag(std::uint32_t) const { return std::nullopt; }
  std::optional<SourceLink> source(std::uint32_t n) const {
    return source_of(t.frames, t.nodes[n].role, t.nodes[n].frame);
  }
  NodeId context(std::uint32_t) const { return kNoNode; }
  void write_value(JsonWriter& w, std::uint32_t n) const { w.value(t.value(n)); }
  void write_self(JsonWriter& w, std::uint32_t) const { w.null(); }
};

template <typename A>
std::vector<FlameRect> layout_impl(const A& a, const LayoutOptions& options) {
  if (!(options.min_width >= 0.0 && options.min_width <= 0.5)) {
    throw Error(ErrorKind::kRange, "min_width must be within [0, 0.5]");
  }
  std::vector<FlameRect> rects;
  if (a.size() == 0) return rects;
  const long double total = a.width(0);
  auto make = [&](std::int64_t node, std::uint32_t depth, long double start, long double w) {
    FlameRect r;
    r.node = node;
    r.depth = depth;
    if (total > 0) {
      r.x0 = static_cast<double>(start / total);
      r.x1 = static_cast<double>((start + w) / total);
    } else {
      r.x0 = 0;
      r.x1 = 1;
    }
    return r;
  };

  struct Entry {
    std::int64_t node;  // -1: narrow-children rect
    std::uint32_t depth;
    long double start;
    long double width;
  };
  std::vector<Entry> stack{{0, 0, 0, total}};
  std::vector<Entry> pending;
  while (!stack.empty()) {
    Entry e = stack.back();
    stack.pop_back();
    FlameRect r = make(e.node, e.depth, e.start, e.width);
    if (e.node < 0) {
      r.label = std::string(kNarrowLabel);
      rects.push_back(std::move(r));
      continue;
    }
    auto n = static_cast<std::uint32_t>(e.node);
    r.label = a.label(n);
    r.color_key = a.color(n);
    r.tag = a.tag(n);
    r.source = a.source(n);
    r.context = a.context(n);
    rects.push_back(std::move(r));

    pending.clear();
    long double cursor = e.start;
    long double narrow = 0;
    for (auto c : a.children(n)) {
      long double w = a.width(c);
      if (w <= 0) continue;
      if (w / total < options.min_width) {
        narrow += w;
        continue;
      }
      pending.push_back({c, e.depth + 1, cursor, w});
      cursor += w;
    }
    if (narrow > 0) stack.push_back({-1, e.depth + 1, cursor, narrow});
    for (auto it = pending.rbegin(); it != pending.rend(); ++it) stack.push_back(*it);
  }
  return rects;
}

class StringTable {
 public:
  std::uint32_t index(const std::string& s) {
    auto [it, inserted] = index_.try_emplace(s, static_cast<std::uint32_t>(items_.size()));
    if (inserted) items_.push_back(s);
    return it->second;
  }
  const std::vector<std::string>& items() const { return items_; }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> items_;
};

int tag_code(const std::optional<DiffTag>& tag) { return tag ? static_cast<int>(*tag) : -1; }

using Section = std::function<void(JsonWriter&)>;

template <typename A>
std::string export_impl(const A& a, std::string_view kind, std::string_view color_basis,
                        const std::string& metric, const ExportOptions& options,
                        std::map<std::string, Section> sections) {
  auto rects = layout_impl(a, options.layout);
  StringTable labels;
  std::map<std::pair<std::string, std::uint32_t>, std::uint32_t> source_index;
  std::vector<const SourceLink*> sources;
  auto source_id = [&](const std::optional<SourceLink>& s) -> std::int64_t {
    if (!s) return -1;
    auto [it, inserted] =
        source_index.try_emplace({s->file, s->line}, static_cast<std::uint32_t>(sources.size()));
    if (inserted) sources.push_back(&*s);
    return it->second;
  };

  std::vector<std::uint32_t> depth(a.size(), 0);
  for (std::uint32_t n = 1; n < a.size(); ++n) depth[n] = depth[a.parent(n)] + 1;
  const long double total = a.size() ? a.width(0) : 0;

  sections["colorBasis"] = [&](JsonWriter& w) { w.value(color_basis); };
  sections["contexts"] = [&](JsonWriter& w) {
    w.begin_array();
    for (const auto& r : rects) {
      w.value(r.context == kNoNode ? std::int64_t{-1} : static_cast<std::int64_t>(r.context));
    }
    w.end_array();
  };
  sections["kind"] = [&](JsonWriter& w) { w.value(kind); };
  sections["metric"] = [&](JsonWriter& w) { w.value(metric); };
  if (options.profile) {
    sections["metrics"] = [&](JsonWriter& w) {
      w.begin_array();
      for (const auto& m : options.profile->metrics()) {
        w.begin_object();
        w.key("aggregator");
        w.value(to_string(m.aggregator));
        w.key("kind");
        w.value(to_string(m.kind));
        w.key("name");
        w.value(m.name);
        w.key("unit");
        w.value(m.unit);
        w.end_object();
      }
      w.end_array();
    };
  }
  sections["rects"] = [&](JsonWriter& w) {
    w.begin_array();
    for (const auto& r : rects) {
      w.begin_array();
      w.value(r.node);
      w.value(r.depth);
      w.value(r.x0);
      w.value(r.x1);
      w.value(labels.index(r.label));
      w.value(r.color_key);
      w.value(tag_code(r.tag));
      w.value(source_id(r.source));
      w.end_array();
    }
    w.end_array();
  };
  sections["rows"] = [&](JsonWriter& w) {
    w.begin_array();
    for (std::uint32_t n = 0; n < a.size(); ++n) {
      w.begin_array();
      w.value(n);
      w.value(n == 0 ? std::int64_t{-1} : static_cast<std::int64_t>(a.parent(n)));
      w.value(depth[n]);
      w.value(labels.index(a.label(n)));
      a.write_value(w, n);
      a.write_self(w, n);
      w.value(total > 0 ? static_cast<double>(a.width(n) / total * 100) : 0.0);
      w.end_array();
    }
    w.end_array();
  };
  sections["searchIndex"] = [&](JsonWriter& w) {
    std::map<std::string, std::vector<std::uint32_t>> index;
    for (std::uint32_t n = 0; n < a.size(); ++n) {
      auto name = a.function_name(n);
      if (!name.empty()) index[name].push_back(n);
    }
    w.begin_object();
    for (const auto& [name, ids] : index) {
      w.key(name);
      w.begin_array();
      for (auto id : ids) w.value(id);
      w.end_array();
    }
    w.end_object();
  };
  sections["tags"] = [&](JsonWriter& w) {
    w.begin_array();
    if (kind == "diff") {
      for (const auto& r : rects) w.value(r.tag ? tag_prefix(*r.tag) : std::string_view());
    }
    w.end_array();
  };
  sections["total"] = [&](JsonWriter& w) { a.write_value(w, 0); };
  sections["version"] = [&](JsonWriter& w) { w.value(1); };

  // Labels and sources fill while rects and rows are written, so those two
  // are rendered first and spliced in at their sorted positions.
  std::string rects_text, rows_text;
  {
    JsonWriter w(rects_text);
    sections["rects"](w);
  }
  {
    JsonWriter w(rows_text);
    sections["rows"](w);
  }
  sections["rects"] = [&](JsonWriter& w) { w.raw(rects_text); };
  sections["rows"] = [&](JsonWriter& w) { w.raw(rows_text); };
  sections["labels"] = [&](JsonWriter& w) {
    w.begin_array();
    for (const auto& l : labels.items()) w.value(l);
    w.end_array();
  };
  sections["sources"] = [&](JsonWriter& w) {
    w.begin_array();
    for (const auto* s : sources) {
      w.begin_array();
      w.value(s->file);
      w.value(s->line);
      w.end_array();
    }
    w.end_array();
  };

  std::string out;
  JsonWriter w(out);
  w.begin_object();
  for (const auto& [key, write] : sections) {
    w.key(key);
    write(w);
  }
  w.end_object();
  out += '\n';
  return out;
}

}  // namespace

std::vector<FlameRect> layout_flame(const ViewTree& tree, const LayoutOptions& options) {
  return layout_impl(ViewAdapter{tree}, options);
}

std::vector<FlameRect> layout_flame(const DiffTree& tree, const LayoutOptions& options) {
  return layout_impl(DiffAdapter{tree}, options);
}

std::vector<FlameRect> layout_flame(const AggregateTree& tree, const LayoutOptions& options) {
  return layout_impl(AggregateAdapter{tree}, options);
}

std::vector<TableRow> table_rows(const ViewTree& tree, std::uint32_t node) {
  std::vector<TableRow> rows;
  if (tree.nodes.empty()) return rows;
  if (node != kNoNode && node >= tree.nodes.size()) {
    throw Error(ErrorKind::kUnknownPath, "no node " + std::to_string(node) + " in the view");
  }
  const double total = static_cast<double>(tree.total());
  auto row = [&](std::uint32_t n) {
    TableRow r;
    r.node = n;
    r.parent = tree.nodes[n].parent;
    r.depth = static_cast<std::uint32_t>(tree.depth(n));
    r.label = tree.label(n);
    r.inclusive = tree.nodes[n].inclusive;
    r.exclusive = tree.nodes[n].exclusive;
    r.percent = total > 0 ? static_cast<double>(tree.value(n)) / total * 100 : 0.0;
    r.expandable = !tree.children(n).empty();
    return r;
  };
  if (node == kNoNode) {
    rows.push_back(row(0));
  } else {
    for (auto c : tree.children(node)) rows.push_back(row(c));
  }
  return rows;
}

std::string export_view(const ViewTree& tree, const ExportOptions& options) {
  return export_impl(ViewAdapter{tree}, to_string(tree.kind), "module", tree.metric, options, {});
}

std::string export_diff(const DiffTree& tree, const ExportOptions& options) {
  std::map<std::string, Section> extra;
  extra["diff"] = [&](JsonWriter& w) {
    w.begin_array();
    for (std::uint32_t n = 0; n < tree.nodes.size(); ++n) {
      const auto& node = tree.nodes[n];
      w.begin_array();
      w.value(node.m1);
      w.value(node.m2);
      if (auto d = tree.exact_delta(n)) {
        w.value(*d);
      } else {
        w.value(tree.delta(n));
      }
      w.value(tree.ratio(n));
      w.value(static_cast<int>(node.tag));
      w.end_array();
    }
    w.end_array();
  };
  extra["scale"] = [&](JsonWriter& w) { w.value(tree.scale); };
  extra["view"] = [&](JsonWriter& w) { w.value(to_string(tree.kind)); };
  return export_impl(DiffAdapter{tree}, "diff", "tag", tree.metric, options, std::move(extra));
}

std::string export_aggregate(const AggregateTree& tree, const ExportOptions& options) {
  std::map<std::string, Section> extra;
  extra["inputs"] = [&](JsonWriter& w) {
    w.begin_array();
    for (const auto& name : tree.inputs) w.value(name);
    w.end_array();
  };
  extra["aggregator"] = [&](JsonWriter& w) { w.value(to_string(tree.aggregator)); };
  extra["stats"] = [&](JsonWriter& w) {
    w.begin_array();
    for (const auto& node : tree.nodes) {
      const auto& s = node.stats;
      w.begin_array();
      w.value(s.sum);
      w.value(s.min);
      w.value(s.max);
      w.value(s.mean);
      w.value(static_cast<std::uint64_t>(s.present));
      w.end_array();
    }
    w.end_array();
  };
  extra["vectors"] = [&](JsonWriter& w) {
    w.begin_array();
    for (const auto& node : tree.nodes) {
      w.begin_array();
      for (const auto& v : node.values) w.value(v);
      w.end_array();
    }
    w.end_array();
  };
  extra["view"] = [&](JsonWriter& w) { w.value(to_string(tree.kind)); };
  return export_impl(AggregateAdapter{tree}, "aggregate", "module", tree.metric, options,
                     std::move(extra));
}

}  // namespace profcct
