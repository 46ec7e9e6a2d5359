#include "profcct/native_format.h"

#include <cstring>
#include <set>
#include <rapidjson/error/en.h>
#include <rapidjson/memorystream.h>
#include <rapidjson/reader.h>

#include "json_writer.h"
#include "profcct/error.h"

namespace profcct {

namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_le(std::string_view in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

void write_values(detail::JsonWriter& w, const Profile& p, NodeId node) {
  w.begin_array();
  for (std::size_t m = 0; m < p.metrics().size(); ++m) {
    if (p.metrics()[m].kind == MetricKind::kDerived) {
      w.value(p.real(node, m));
    } else {
      w.value(p.count(node, m));
    }
  }
  w.end_array();
}

// One number or null from a values array, interpreted once metric kinds are known.
struct RawValue {
  enum class Type : std::uint8_t { kNull, kUnsigned, kNegative, kFloat } type = Type::kNull;
  std::uint64_t u = 0;
  double d = 0;
};

struct RawNode {
  std::int64_t frame = -1;
  std::int64_t parent = -2;
  NodeKind kind = NodeKind::kCode;
  std::size_t values_begin = 0;
  std::size_t values_end = 0;
  std::size_t offset = 0;
};

struct RawPoint {
  std::vector<std::pair<std::string, std::int64_t>> contexts;
  std::size_t values_begin = 0;
  std::size_t values_end = 0;
  std::size_t offset = 0;
};

class NativeSax : public rapidjson::BaseReaderHandler<rapidjson::UTF8<>, NativeSax> {
 public:
  NativeSax(const rapidjson::MemoryStream* stream, std::size_t base_offset)
      : stream_(stream), base_offset_(base_offset) {}

  bool Null() { return scalar(RawValue{}); }
  bool Bool(bool) { return fail("unexpected boolean"); }
  bool Int(int v) { return Int64(v); }
  bool Int64(std::int64_t v) {
    RawValue r;
    if (v < 0) {
      r.type = RawValue::Type::kNegative;
      r.d = static_cast<double>(v);
    } else {
      r.type = RawValue::Type::kUnsigned;
      r.u = static_cast<std::uint64_t>(v);
    }
    return scalar(r);
  }
  bool Uint(unsigned v) { return Uint64(v); }
  bool Uint64(std::uint64_t v) {
    RawValue r;
    r.type = RawValue::Type::kUnsigned;
    r.u = v;
    return scalar(r);
  }
  bool Double(double v) {
    RawValue r;
    r.type = RawValue::Type::kFloat;
    r.d = v;
    return scalar(r);
  }

  bool String(const char* text, rapidjson::SizeType length, bool) {
    std::string s(text, length);
    switch (section_) {
      case Section::kMeta:
        if (depth_ == 2) {
          if (key_[2] == "name") meta.name = s;
          else if (key_[2] == "collector") meta.collector = s;
          else if (key_[2] == "timestamp") meta.timestamp = s;
          else return fail("unexpected meta key '" + key_[2] + "'");
          return true;
        }
        if (depth_ == 3 && key_[2] == "properties") {
          meta.properties[key_[3]] = s;
          return true;
        }
        break;
      case Section::kFrames:
        if (depth_ == 3) {
          if (key_[3] == "fn") frames.back().function_name = s;
          else if (key_[3] == "mod") frames.back().module_name = s;
          else if (key_[3] == "file") frames.back().file_path = s;
          else return fail("unexpected frame key '" + key_[3] + "'");
          return true;
        }
        break;
      case Section::kMetrics:
        if (depth_ == 3) {
          auto& m = metrics.back();
          if (key_[3] == "name") {
            m.name = s;
          } else if (key_[3] == "unit") {
            m.unit = s;
          } else if (key_[3] == "kind") {
            auto k = parse_metric_kind(s);
            if (!k) return fail("unknown metric kind '" + s + "'");
            m.kind = *k;
          } else if (key_[3] == "aggregator") {
            auto a = parse_aggregator(s);
            if (!a) return fail("unknown aggregator '" + s + "'");
            m.aggregator = *a;
          } else {
            return fail("unexpected metric key '" + key_[3] + "'");
          }
          return true;
        }
        break;
      case Section::kNodes:
        if (depth_ == 3 && key_[3] == "kind") {
          if (s == "code") nodes.back().kind = NodeKind::kCode;
          else if (s == "data") nodes.back().kind = NodeKind::kDataObject;
          else return fail("unknown node kind '" + s + "'");
          return true;
        }
        break;
      case Section::kPoints:
        if (depth_ == 5 && key_[3] == "ctx" && pair_index_ == 0) {
          points.back().contexts.back().first = s;
          ++pair_index_;
          return true;
        }
        break;
      case Section::kNone:
        break;
    }
    return fail("unexpected string");
  }

  bool StartObject() {
    ++depth_;
    if (depth_ >= key_.size()) key_.resize(depth_ + 1);
    key_[depth_].clear();
    if (depth_ == 1) return true;
    if (depth_ == 2 && section_ == Section::kMeta) return true;
    if (depth_ == 3) {
      switch (section_) {
        case Section::kFrames: frames.emplace_back(); return true;
        case Section::kMetrics: metrics.emplace_back(); return true;
        case Section::kNodes:
          nodes.emplace_back();
          nodes.back().offset = offset();
          return true;
        case Section::kPoints:
          points.emplace_back();
          points.back().offset = offset();
          return true;
        case Section::kMeta:
          if (key_[2] == "properties") return true;
          break;
        case Section::kNone:
          break;
      }
    }
    return fail("unexpected object");
  }

  bool Key(const char* text, rapidjson::SizeType length, bool) {
    std::string k(text, length);
    key_[depth_] = k;
    if (depth_ == 1) {
      if (k == "frames") section_ = Section::kFrames;
      else if (k == "meta") section_ = Section::kMeta;
      else if (k == "metrics") section_ = Section::kMetrics;
      else if (k == "nodes") section_ = Section::kNodes;
      else if (k == "points") section_ = Section::kPoints;
      else return fail("unknown top-level key '" + k + "'");
      if (!seen_.insert(k).second) return fail("duplicate top-level key '" + k + "'");
    }
    return true;
  }

  bool EndObject(rapidjson::SizeType) {
    if (depth_ == 3 && section_ == Section::kNodes) {
      nodes.back().values_end = values.size();
      if (nodes.back().frame < 0 || nodes.back().parent == -2) {
        return fail("node needs frame and parent");
      }
    }
    if (depth_ == 3 && section_ == Section::kPoints) {
      points.back().values_end = values.size();
    }
    --depth_;
    return true;
  }

  bool StartArray() {
    ++depth_;
    if (depth_ >= key_.size()) key_.resize(depth_ + 1);
    key_[depth_].clear();
    if (depth_ == 2 && section_ != Section::kMeta && section_ != Section::kNone) return true;
    if (depth_ == 4 && key_[3] == "values" &&
        (section_ == Section::kNodes || section_ == Section::kPoints)) {
      if (section_ == Section::kNodes) nodes.back().values_begin = values.size();
      else points.back().values_begin = values.size();
      return true;
    }
    if (depth_ == 4 && key_[3] == "ctx" && section_ == Section::kPoints) return true;
    if (depth_ == 5 && key_[3] == "ctx" && section_ == Section::kPoints) {
      points.back().contexts.emplace_back(std::string(), -1);
      pair_index_ = 0;
      return true;
    }
    return fail("unexpected array");
  }

  bool EndArray(rapidjson::SizeType) {
    if (depth_ == 5 && section_ == Section::kPoints && pair_index_ != 2) {
      return fail("context entries are [role, node] pairs");
    }
    --depth_;
    return true;
  }

  ProfileMeta meta;
  std::vector<MetricDescriptor> metrics;
  std::vector<Frame> frames;
  std::vector<RawNode> nodes;
  std::vector<RawPoint> points;
  std::vector<RawValue> values;

  std::optional<std::size_t> error_offset;
  std::string error;

 private:
  enum class Section { kNone, kFrames, kMeta, kMetrics, kNodes, kPoints };

  std::size_t offset() const { return base_offset_ + stream_->Tell(); }

  bool fail(const std::string& message) {
    if (!error_offset) {
      error_offset = offset();
      error = message;
    }
    return false;
  }

  static bool as_int(const RawValue& v, std::int64_t& out) {
    if (v.type == RawValue::Type::kUnsigned && v.u <= static_cast<std::uint64_t>(INT64_MAX)) {
      out = static_cast<std::int64_t>(v.u);
      return true;
    }
    if (v.type == RawValue::Type::kNegative) {
      out = static_cast<std::int64_t>(v.d);
      return true;
    }
    return false;
  }

  bool scalar(const RawValue& v) {
    std::int64_t i = 0;
    switch (section_) {
      case Section::kFrames:
        if (depth_ == 3 && v.type == RawValue::Type::kUnsigned) {
          if (key_[3] == "line") {
            if (v.u > UINT32_MAX) return fail("line out of range");
            frames.back().line = static_cast<std::uint32_t>(v.u);
            return true;
          }
          if (key_[3] == "addr") {
            frames.back().address = v.u;
            return true;
          }
        }
        break;
      case Section::kNodes:
        if (depth_ == 3 && as_int(v, i)) {
          if (key_[3] == "frame" && i >= 0) {
            nodes.back().frame = i;
            return true;
          }
          if (key_[3] == "parent" && i >= -1) {
            nodes.back().parent = i;
            return true;
          }
        }
        if (depth_ == 4 && key_[3] == "values") {
          values.push_back(v);
          return true;
        }
        break;
      case Section::kPoints:
        if (depth_ == 4 && key_[3] == "values") {
          values.push_back(v);
          return true;
        }
        if (depth_ == 5 && key_[3] == "ctx" && pair_index_ == 1 && as_int(v, i)) {
          points.back().contexts.back().second = i;
          ++pair_index_;
          return true;
        }
        break;
      default:
        break;
    }
    return fail("unexpected value");
  }

  const rapidjson::MemoryStream* stream_;
  std::size_t base_offset_;
  std::size_t depth_ = 0;
  Section section_ = Section::kNone;
  std::vector<std::string> key_ = std::vector<std::string>(8);
  std::set<std::string> seen_;
  int pair_index_ = 0;
};

}  // namespace

// Assembles a Profile from the raw SAX output, validating every structural
// invariant on the way.
class NativeReader {
 public:
  static Profile build(NativeSax& sax, std::size_t document_offset) {
    auto fail = [](const std::string& message, std::size_t offset) -> Error {
      return Error(ErrorKind::kFormat, message + " (at byte " + std::to_string(offset) + ")",
                   offset);
    };

    Profile p = [&] {
      try {
        return Profile(sax.meta, sax.metrics);
      } catch (const Error& e) {
        throw fail(e.what(), document_offset);
      }
    }();
    p.frames_.clear();
    p.frame_index_.clear();
    p.nodes_.clear();
    p.child_index_.clear();
    p.columns_.assign(p.metrics_.size(), Profile::Column{});

    for (const auto& f : sax.frames) {
      if (f.function_name.empty() && f.address == 0) {
        throw fail("frame " + std::to_string(p.frames_.size()) + " has neither name nor address",
                   document_offset);
      }
      if (!p.frame_index_.emplace(f, static_cast<FrameId>(p.frames_.size())).second) {
        throw fail("duplicate frame " + std::to_string(p.frames_.size()), document_offset);
      }
      p.frames_.push_back(f);
    }

    const std::size_t metric_count = p.metrics_.size();
    auto read_values = [&](std::size_t begin, std::size_t end, std::size_t offset, bool allow_real,
                           std::vector<Count>& counts, std::vector<std::optional<double>>& reals) {
      if (end - begin != metric_count) {
        throw fail("expected " + std::to_string(metric_count) + " values", offset);
      }
      counts.assign(metric_count, std::nullopt);
      reals.assign(metric_count, std::nullopt);
      for (std::size_t m = 0; m < metric_count; ++m) {
        const RawValue& v = sax.values[begin + m];
        if (v.type == RawValue::Type::kNull) continue;
        if (p.metrics_[m].kind == MetricKind::kDerived) {
          if (!allow_real) throw fail("derived value in a monitoring point", offset);
          if (v.type == RawValue::Type::kFloat) reals[m] = v.d;
          else if (v.type == RawValue::Type::kUnsigned) reals[m] = static_cast<double>(v.u);
          else reals[m] = v.d;
        } else {
          if (v.type != RawValue::Type::kUnsigned) {
            throw fail("metric '" + p.metrics_[m].name + "' needs non-negative integers", offset);
          }
          counts[m] = v.u;
        }
      }
    };

    std::vector<Count> counts;
    std::vector<std::optional<double>> reals;
    for (std::size_t i = 0; i < sax.nodes.size(); ++i) {
      const RawNode& n = sax.nodes[i];
      if (n.frame < 0 || static_cast<std::size_t>(n.frame) >= p.frames_.size()) {
        throw fail("node " + std::to_string(i) + " references unknown frame", n.offset);
      }
      if (i == 0) {
        if (n.parent != -1) throw fail("node 0 must be the root", n.offset);
        if (p.frames_[n.frame].function_name != kRootName) {
          throw fail("root node must use the root frame", n.offset);
        }
      } else if (n.parent < 0 || static_cast<std::size_t>(n.parent) >= i) {
        throw fail("node " + std::to_string(i) + " must follow its parent", n.offset);
      }
      auto frame = static_cast<FrameId>(n.frame);
      NodeId parent = i == 0 ? kNoNode : static_cast<NodeId>(n.parent);
      if (parent != kNoNode && p.find_child(parent, frame) != kNoNode) {
        throw fail("node " + std::to_string(i) + " duplicates a sibling frame", n.offset);
      }
      NodeId id = p.append_node(parent, frame, n.kind);
      read_values(n.values_begin, n.values_end, n.offset, true, counts, reals);
      for (std::size_t m = 0; m < metric_count; ++m) {
        if (p.metrics_[m].kind == MetricKind::kDerived) {
          p.columns_[m].reals[id] = reals[m];
        } else {
          p.columns_[m].counts[id] = counts[m];
        }
      }
    }
    if (p.nodes_.empty()) throw fail("profile has no root node", document_offset);

    std::vector<std::vector<std::uint64_t>> self_sums(
        metric_count, std::vector<std::uint64_t>(p.nodes_.size(), 0));
    for (const auto& rp : sax.points) {
      if (rp.contexts.empty()) throw fail("monitoring point without contexts", rp.offset);
      std::vector<RoleContext> contexts;
      for (const auto& [role, node] : rp.contexts) {
        if (node < 0 || static_cast<std::size_t>(node) >= p.nodes_.size()) {
          throw fail("monitoring point references unknown node " + std::to_string(node),
                     rp.offset);
        }
        contexts.push_back({role, static_cast<NodeId>(node)});
      }
      read_values(rp.values_begin, rp.values_end, rp.offset, false, counts, reals);
      bool self = contexts.size() == 1 && contexts[0].role == kSelfRole;
      if (self) {
        for (std::size_t m = 0; m < metric_count; ++m) {
          if (p.metrics_[m].kind == MetricKind::kAdditive && counts[m]) {
            self_sums[m][contexts[0].node] += *counts[m];
          }
        }
        if (!p.self_point_index_.emplace(contexts[0].node, p.points_.size()).second) {
          throw fail("duplicate monitoring point", rp.offset);
        }
      } else if (!p.point_index_.emplace(point_key(contexts), p.points_.size()).second) {
        throw fail("duplicate monitoring point", rp.offset);
      }
      MonitoringPoint point;
      point.contexts = std::move(contexts);
      point.values = counts;
      p.points_.push_back(std::move(point));
    }

    for (std::size_t m = 0; m < metric_count; ++m) {
      if (p.metrics_[m].kind != MetricKind::kAdditive) continue;
      for (NodeId n = 0; n < p.nodes_.size(); ++n) {
        if (p.columns_[m].counts[n].value_or(0) != self_sums[m][n]) {
          throw fail("node " + std::to_string(n) + " value for '" + p.metrics_[m].name +
                         "' disagrees with its monitoring points",
                     sax.nodes[n].offset);
        }
      }
    }
    return p;
  }

  static std::string point_key(const std::vector<RoleContext>& contexts) {
    std::string key;
    for (const auto& c : contexts) {
      key += c.role;
      key += '\0';
      key += std::to_string(c.node);
      key += '\0';
    }
    return key;
  }
};

std::string serialize(const Profile& profile) {
  const Profile p = profile.canonicalized();
  std::string doc;
  doc.reserve(64 * p.node_count() + 1024);
  detail::JsonWriter w(doc);
  w.begin_object();

  w.key("frames");
  w.begin_array();
  for (const auto& f : p.frames()) {
    w.begin_object();
    w.key("addr");
    w.value(f.address);
    w.key("file");
    w.value(f.file_path);
    w.key("fn");
    w.value(f.function_name);
    w.key("line");
    w.value(f.line);
    w.key("mod");
    w.value(f.module_name);
    w.end_object();
  }
  w.end_array();

  w.key("meta");
  w.begin_object();
  w.key("collector");
  w.value(p.meta().collector);
  w.key("name");
  w.value(p.meta().name);
  w.key("properties");
  w.begin_object();
  for (const auto& [k, v] : p.meta().properties) {
    w.key(k);
    w.value(v);
  }
  w.end_object();
  w.key("timestamp");
  w.value(p.meta().timestamp);
  w.end_object();

  w.key("metrics");
  w.begin_array();
  for (const auto& m : p.metrics()) {
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

  w.key("nodes");
  w.begin_array();
  for (const auto& n : p.nodes()) {
    w.begin_object();
    w.key("frame");
    w.value(n.frame);
    if (n.kind == NodeKind::kDataObject) {
      w.key("kind");
      w.value("data");
    }
    w.key("parent");
    w.value(n.parent == kNoNode ? std::int64_t{-1} : static_cast<std::int64_t>(n.parent));
    w.key("values");
    write_values(w, p, n.id);
    w.end_object();
  }
  w.end_array();

  w.key("points");
  w.begin_array();
  for (const auto& pt : p.points()) {
    w.begin_object();
    w.key("ctx");
    w.begin_array();
    for (const auto& c : pt.contexts) {
      w.begin_array();
      w.value(c.role);
      w.value(c.node);
      w.end_array();
    }
    w.end_array();
    w.key("values");
    w.begin_array();
    for (const auto& v : pt.values) w.value(v);
    w.end_array();
    w.end_object();
  }
  w.end_array();
  w.end_object();

  std::string out;
  out.reserve(kNativeHeaderSize + doc.size());
  out += kNativeMagic;
  put_le(out, kNativeVersion, 2);
  put_le(out, doc.size(), 8);
  out += doc;
  return out;
}

Profile deserialize(std::string_view bytes) {
  if (bytes.size() < kNativeMagic.size() ||
      bytes.substr(0, kNativeMagic.size()) != kNativeMagic) {
    throw Error(ErrorKind::kFormat, "missing PCCT magic (at byte 0)", 0);
  }
  if (bytes.size() < kNativeHeaderSize) {
    throw Error(ErrorKind::kFormat, "truncated PCCT header (at byte " +
                                        std::to_string(bytes.size()) + ")",
                bytes.size());
  }
  auto version = get_le(bytes, 4, 2);
  if (version != kNativeVersion) {
    throw Error(ErrorKind::kFormat, "unsupported PCCT version " + std::to_string(version) +
                                        " (at byte 4)",
                4);
  }
  auto length = get_le(bytes, 6, 8);
  if (length != bytes.size() - kNativeHeaderSize) {
    throw Error(ErrorKind::kFormat,
                "document length " + std::to_string(length) + " does not match " +
                    std::to_string(bytes.size() - kNativeHeaderSize) + " remaining bytes (at byte 6)",
                6);
  }

  std::string_view doc = bytes.substr(kNativeHeaderSize);
  rapidjson::MemoryStream stream(doc.data(), doc.size());
  NativeSax sax(&stream, kNativeHeaderSize);
  rapidjson::Reader reader;
  auto result = reader.Parse<rapidjson::kParseFullPrecisionFlag | rapidjson::kParseValidateEncodingFlag |
                             rapidjson::kParseIterativeFlag>(stream, sax);
  if (result.IsError() || sax.error_offset) {
    std::size_t at = sax.error_offset.value_or(kNativeHeaderSize + result.Offset());
    std::string why = sax.error_offset ? sax.error : rapidjson::GetParseError_En(result.Code());
    throw Error(ErrorKind::kFormat, "malformed PCCT document: " + why + " (at byte " + std::to_string(at) + ")",
                at);
  }
  return NativeReader::build(sax, kNativeHeaderSize);
}

}  // namespace profcct
