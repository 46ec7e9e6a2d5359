#pragma once

// Streaming JSON output for documents too large to build as a DOM.
// The caller is responsible for emitting keys in canonical order.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace profcct::detail {

class JsonWriter {
 public:
  explicit JsonWriter(std::string& out) : out_(out) {}

  void begin_object() { value_prefix(); out_ += '{'; stack_.push_back(true); }
  void end_object() { out_ += '}'; stack_.pop_back(); }
  void begin_array() { value_prefix(); out_ += '['; stack_.push_back(true); }
  void end_array() { out_ += ']'; stack_.pop_back(); }

  void key(std::string_view k) {
    separator();
    write_string(k);
    out_ += ':';
    after_key_ = true;
  }

  void value(std::string_view s) { value_prefix(); write_string(s); }
  void value(const char* s) { value(std::string_view(s)); }
  void value(const std::string& s) { value(std::string_view(s)); }
  void value(bool b) { value_prefix(); out_ += b ? "true" : "false"; }
  void null() { value_prefix(); out_ += "null"; }
  // A value already rendered as JSON text.
  void raw(std::string_view json) { value_prefix(); out_ += json; }

  void value(std::uint64_t v) { value_prefix(); append_number(v); }
  void value(std::int64_t v) { value_prefix(); append_number(v); }
  void value(std::uint32_t v) { value(static_cast<std::uint64_t>(v)); }
  void value(int v) { value(static_cast<std::int64_t>(v)); }

  // Doubles are rounded to 9 significant digits so exports are byte-stable.
  void value(double v) {
    value_prefix();
    if (!std::isfinite(v)) {
      out_ += "null";
      return;
    }
    char buf[32];
    int n = std::snprintf(buf, sizeof(buf), "%.9g", v);
    std::string_view text(buf, static_cast<std::size_t>(n));
    if (text == "-0") text = "0";
    out_ += text;
  }

  template <typename T>
  void value(const std::optional<T>& v) {
    if (v) {
      value(*v);
    } else {
      null();
    }
  }

 private:
  template <typename T>
  void append_number(T v) {
    char buf[24];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out_.append(buf, end);
  }

  void separator() {
    if (stack_.empty()) return;
    if (stack_.back()) {
      stack_.back() = false;
    } else {
      out_ += ',';
    }
  }

  void value_prefix() {
    if (after_key_) {
      after_key_ = false;
      return;
    }
    separator();
  }

  void write_string(std::string_view s) {
    out_ += '"';
    for (char c : s) {
      auto u = static_cast<unsigned char>(c);
      switch (c) {
        case '"': out_ += "\\\""; break;
        case '\\': out_ += "\\\\"; break;
        case '\n': out_ += "\\n"; break;
        case '\r': out_ += "\\r"; break;
        case '\t': out_ += "\\t"; break;
        case '\b': out_ += "\\b"; break;
        case '\f': out_ += "\\f"; break;
        default:
          if (u < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "\\u%04x", u);
            out_ += buf;
          } else {
            out_ += c;
          }
      }
    }
    out_ += '"';
  }

  std::string& out_;
  std::vector<bool> stack_;  // true while the container is still empty
  bool after_key_ = false;
};

}  // namespace profcct::detail
