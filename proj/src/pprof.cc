// pprof `profile.proto` decoding. The wire format is read directly; only the
// fields the converter needs are interpreted, everything else is skipped.

#include <zlib.h>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "profcct/error.h"
#include "profcct/ingest.h"

namespace profcct {

namespace {

Error format_error(const std::string& message, std::optional<std::size_t> offset = std::nullopt) {
  std::string text = "pprof: " + message;
  if (offset) text += " (at byte " + std::to_string(*offset) + ")";
  return Error(ErrorKind::kFormat, text, offset);
}

enum WireType : std::uint32_t { kVarint = 0, kFixed64 = 1, kLengthDelimited = 2, kFixed32 = 5 };

class WireReader {
 public:
  WireReader(std::string_view data, std::size_t base) : data_(data), base_(base) {}

  bool done() const { return pos_ >= data_.size(); }
  std::size_t offset() const { return base_ + pos_; }

  std::uint64_t varint() {
    std::uint64_t result = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (pos_ >= data_.size()) throw format_error("truncated varint", offset());
      auto byte = static_cast<unsigned char>(data_[pos_++]);
      result |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
      if ((byte & 0x80) == 0) return result;
    }
    throw format_error("varint too long", offset());
  }

  // Returns false at end of message.
  bool next(std::uint32_t& field, std::uint32_t& wire) {
    if (done()) return false;
    std::uint64_t tag = varint();
    field = static_cast<std::uint32_t>(tag >> 3);
    wire = static_cast<std::uint32_t>(tag & 7);
    if (field == 0) throw format_error("field number 0", offset());
    return true;
  }

  WireReader bytes() {
    std::uint64_t len = varint();
    if (len > data_.size() - pos_) throw format_error("truncated length-delimited field", offset());
    WireReader sub(data_.substr(pos_, len), base_ + pos_);
    pos_ += len;
    return sub;
  }

  std::string_view raw() const { return data_; }

  void skip(std::uint32_t wire) {
    switch (wire) {
      case kVarint: varint(); return;
      case kFixed64: advance(8); return;
      case kLengthDelimited: bytes(); return;
      case kFixed32: advance(4); return;
      default: throw format_error("unsupported wire type " + std::to_string(wire), offset());
    }
  }

  // Appends a repeated integer field, packed or not.
  void repeated(std::uint32_t wire, std::vector<std::uint64_t>& out) {
    if (wire == kVarint) {
      out.push_back(varint());
    } else if (wire == kLengthDelimited) {
      WireReader packed = bytes();
      while (!packed.done()) out.push_back(packed.varint());
    } else {
      throw format_error("bad wire type for repeated integer", offset());
    }
  }

  std::uint64_t integer(std::uint32_t wire) {
    if (wire != kVarint) throw format_error("expected varint field", offset());
    return varint();
  }

 private:
  void advance(std::size_t n) {
    if (n > data_.size() - pos_) throw format_error("truncated fixed-width field", offset());
    pos_ += n;
  }

  std::string_view data_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

struct ValueType {
  std::int64_t type = 0;
  std::int64_t unit = 0;
};

struct Sample {
  std::vector<std::uint64_t> location_ids;
  std::vector<std::uint64_t> values;
  std::size_t offset = 0;
};

struct Line {
  std::uint64_t function_id = 0;
  std::int64_t line = 0;
};

struct Location {
  std::uint64_t mapping_id = 0;
  std::uint64_t address = 0;
  std::vector<Line> lines;
  std::size_t offset = 0;
};

struct Function {
  std::int64_t name = 0;
  std::int64_t system_name = 0;
  std::int64_t filename = 0;
};

struct Mapping {
  std::int64_t filename = 0;
};

struct PprofMessage {
  std::vector<ValueType> sample_types;
  std::vector<Sample> samples;
  std::unordered_map<std::uint64_t, Mapping> mappings;
  std::unordered_map<std::uint64_t, Location> locations;
  std::unordered_map<std::uint64_t, Function> functions;
  std::vector<std::string> strings;
  std::int64_t drop_frames = 0;
  std::int64_t keep_frames = 0;
  std::int64_t time_nanos = 0;
  std::int64_t duration_nanos = 0;
  std::optional<ValueType> period_type;
  std::int64_t period = 0;
  std::vector<std::uint64_t> comments;
  std::int64_t default_sample_type = 0;
};

ValueType decode_value_type(WireReader r) {
  ValueType vt;
  std::uint32_t field, wire;
  while (r.next(field, wire)) {
    if (field == 1) vt.type = static_cast<std::int64_t>(r.integer(wire));
    else if (field == 2) vt.unit = static_cast<std::int64_t>(r.integer(wire));
    else r.skip(wire);
  }
  return vt;
}

PprofMessage decode_message(std::string_view data) {
  PprofMessage msg;
  WireReader r(data, 0);
  std::uint32_t field, wire;
  auto expect_bytes = [&](std::uint32_t w) {
    if (w != kLengthDelimited) throw format_error("expected length-delimited field", r.offset());
  };
  while (r.next(field, wire)) {
    switch (field) {
      case 1:
        expect_bytes(wire);
        msg.sample_types.push_back(decode_value_type(r.bytes()));
        break;
      case 2: {
        expect_bytes(wire);
        WireReader s = r.bytes();
        Sample sample;
        sample.offset = s.offset();
        std::uint32_t f, w;
        while (s.next(f, w)) {
          if (f == 1) s.repeated(w, sample.location_ids);
          else if (f == 2) s.repeated(w, sample.values);
          else s.skip(w);
        }
        msg.samples.push_back(std::move(sample));
        break;
      }
      case 3: {
        expect_bytes(wire);
        WireReader m = r.bytes();
        std::uint64_t id = 0;
        Mapping mapping;
        std::uint32_t f, w;
        while (m.next(f, w)) {
          if (f == 1) id = m.integer(w);
          else if (f == 5) mapping.filename = static_cast<std::int64_t>(m.integer(w));
          else m.skip(w);
        }
        msg.mappings[id] = mapping;
        break;
      }
      case 4: {
        expect_bytes(wire);
        WireReader l = r.bytes();
        std::uint64_t id = 0;
        Location loc;
        loc.offset = l.offset();
        std::uint32_t f, w;
        while (l.next(f, w)) {
          if (f == 1) {
            id = l.integer(w);
          } else if (f == 2) {
            loc.mapping_id = l.integer(w);
          } else if (f == 3) {
            loc.address = l.integer(w);
          } else if (f == 4) {
            if (w != kLengthDelimited) throw format_error("bad line entry", l.offset());
            WireReader ln = l.bytes();
            Line line;
            std::uint32_t lf, lw;
            while (ln.next(lf, lw)) {
              if (lf == 1) line.function_id = ln.integer(lw);
              else if (lf == 2) line.line = static_cast<std::int64_t>(ln.integer(lw));
              else ln.skip(lw);
            }
            loc.lines.push_back(line);
          } else {
            l.skip(w);
          }
        }
        if (id == 0) throw format_error("location without id", loc.offset);
        msg.locations[id] = std::move(loc);
        break;
      }
      case 5: {
        expect_bytes(wire);
        WireReader fr = r.bytes();
        std::uint64_t id = 0;
        Function fn;
        std::uint32_t f, w;
        while (fr.next(f, w)) {
          if (f == 1) id = fr.integer(w);
          else if (f == 2) fn.name = static_cast<std::int64_t>(fr.integer(w));
          else if (f == 3) fn.system_name = static_cast<std::int64_t>(fr.integer(w));
          else if (f == 4) fn.filename = static_cast<std::int64_t>(fr.integer(w));
          else fr.skip(w);
        }
        if (id == 0) throw format_error("function without id", fr.offset());
        msg.functions[id] = fn;
        break;
      }
      case 6: {
        expect_bytes(wire);
        msg.strings.emplace_back(r.bytes().raw());
        break;
      }
      case 7: msg.drop_frames = static_cast<std::int64_t>(r.integer(wire)); break;
      case 8: msg.keep_frames = static_cast<std::int64_t>(r.integer(wire)); break;
      case 9: msg.time_nanos = static_cast<std::int64_t>(r.integer(wire)); break;
      case 10: msg.duration_nanos = static_cast<std::int64_t>(r.integer(wire)); break;
      case 11:
        expect_bytes(wire);
        msg.period_type = decode_value_type(r.bytes());
        break;
      case 12: msg.period = static_cast<std::int64_t>(r.integer(wire)); break;
      case 13: r.repeated(wire, msg.comments); break;
      case 14: msg.default_sample_type = static_cast<std::int64_t>(r.integer(wire)); break;
      default:
        // Unknown field numbers beyond the schema mean this is not a profile.
        if (field > 14) throw format_error("unknown field " + std::to_string(field), r.offset());
        r.skip(wire);
    }
  }
  return msg;
}

std::string gunzip(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw format_error("zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  char buf[1 << 16];
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf, sizeof(buf) - zs.avail_out);
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;
  }
  std::size_t consumed = data.size() - zs.avail_in;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) {
    throw format_error(rc == Z_BUF_ERROR ? "truncated gzip stream" : "corrupt gzip stream",
                       consumed);
  }
  return out;
}

bool is_gzip(std::string_view bytes) {
  return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
         static_cast<unsigned char>(bytes[1]) == 0x8b;
}

const std::string& string_at(const PprofMessage& msg, std::int64_t index) {
  if (index < 0 || static_cast<std::size_t>(index) >= msg.strings.size()) {
    throw format_error("dangling string index " + std::to_string(index));
  }
  return msg.strings[static_cast<std::size_t>(index)];
}

Profile build_profile(const PprofMessage& msg) {
  if (!msg.strings.empty() && !msg.strings[0].empty()) {
    throw format_error("string_table[0] must be empty");
  }
  std::vector<MetricDescriptor> metrics;
  for (const auto& vt : msg.sample_types) {
    metrics.push_back({string_at(msg, vt.type), string_at(msg, vt.unit), MetricKind::kAdditive,
                       Aggregator::kSum});
  }
  ProfileMeta meta;
  meta.collector = "pprof";
  auto& props = meta.properties;
  if (msg.period_type) {
    props["period_type"] =
        string_at(msg, msg.period_type->type) + "/" + string_at(msg, msg.period_type->unit);
  }
  if (msg.period) props["period"] = std::to_string(msg.period);
  if (msg.drop_frames) props["drop_frames"] = string_at(msg, msg.drop_frames);
  if (msg.keep_frames) props["keep_frames"] = string_at(msg, msg.keep_frames);
  if (msg.time_nanos) props["time_nanos"] = std::to_string(msg.time_nanos);
  if (msg.duration_nanos) props["duration_nanos"] = std::to_string(msg.duration_nanos);
  if (msg.default_sample_type) {
    props["default_sample_type"] = string_at(msg, msg.default_sample_type);
  }
  if (!msg.comments.empty()) {
    std::string joined;
    for (auto c : msg.comments) {
      if (!joined.empty()) joined += '\n';
      joined += string_at(msg, static_cast<std::int64_t>(c));
    }
    props["comments"] = joined;
  }

  Profile profile = [&] {
    try {
      return Profile(std::move(meta), std::move(metrics));
    } catch (const Error& e) {
      throw format_error(e.what());
    }
  }();

  // Root-first frame sequence per location, inlined callers before callees.
  std::unordered_map<std::uint64_t, std::vector<FrameId>> location_frames;
  auto frames_of = [&](std::uint64_t id) -> const std::vector<FrameId>& {
    auto cached = location_frames.find(id);
    if (cached != location_frames.end()) return cached->second;
    auto it = msg.locations.find(id);
    if (it == msg.locations.end()) throw format_error("dangling location id " + std::to_string(id));
    const Location& loc = it->second;
    std::string module;
    if (loc.mapping_id != 0) {
      auto m = msg.mappings.find(loc.mapping_id);
      if (m == msg.mappings.end()) {
        throw format_error("dangling mapping id " + std::to_string(loc.mapping_id), loc.offset);
      }
      module = string_at(msg, m->second.filename);
    }
    std::vector<FrameId> ids;
    if (loc.lines.empty()) {
      Frame f;
      f.module_name = module;
      f.address = loc.address;
      f.function_name = display_name(f);
      ids.push_back(profile.intern_frame(f));
    } else {
      for (auto line = loc.lines.rbegin(); line != loc.lines.rend(); ++line) {
        auto fn = msg.functions.find(line->function_id);
        if (fn == msg.functions.end()) {
          throw format_error("dangling function id " + std::to_string(line->function_id),
                             loc.offset);
        }
        Frame f;
        f.function_name = string_at(msg, fn->second.name);
        if (f.function_name.empty()) f.function_name = string_at(msg, fn->second.system_name);
        f.module_name = module;
        f.file_path = string_at(msg, fn->second.filename);
        f.line = line->line > 0 ? static_cast<std::uint32_t>(line->line) : 0;
        if (f.function_name.empty()) f.address = loc.address;
        if (f.function_name.empty() && f.address == 0) f.function_name = "0x0";
        ids.push_back(profile.intern_frame(f));
      }
    }
    return location_frames.emplace(id, std::move(ids)).first->second;
  };

  std::vector<Count> values(msg.sample_types.size());
  for (const auto& sample : msg.samples) {
    if (sample.values.size() != msg.sample_types.size()) {
      throw format_error("sample has " + std::to_string(sample.values.size()) + " values, expected " +
                             std::to_string(msg.sample_types.size()),
                         sample.offset);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (static_cast<std::int64_t>(sample.values[i]) < 0) {
        throw format_error("negative sample value", sample.offset);
      }
      values[i] = sample.values[i];
    }
    NodeId node = profile.root();
    for (auto loc = sample.location_ids.rbegin(); loc != sample.location_ids.rend(); ++loc) {
      for (FrameId f : frames_of(*loc)) node = profile.child(node, f);
    }
    profile.record(node, values);
  }
  return profile;
}

}  // namespace

bool looks_like_pprof(std::string_view bytes) {
  try {
    PprofMessage msg = decode_message(bytes);
    return !msg.sample_types.empty() || !msg.strings.empty();
  } catch (const Error&) {
    return false;
  }
}

Profile parse_pprof(std::string_view bytes) {
  if (bytes.empty()) throw format_error("empty input", 0);
  if (is_gzip(bytes)) {
    std::string raw = gunzip(bytes);
    return build_profile(decode_message(raw));
  }
  return build_profile(decode_message(bytes));
}

}  // namespace profcct
