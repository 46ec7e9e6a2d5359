#include <doctest.h>

#include <map>
#include <json.hpp>

#include "fixtures.h"
#include "generators.h"
#include "profcct/error.h"
#include "profcct/layout.h"

using namespace profcct;
using namespace testsupport;
using nlohmann::json;

namespace {

struct Interval {
  double x0, x1;
  std::size_t depth;
};

// Recursive subdivision by value fractions, independent of layout_flame.
void subdivide(const ViewTree& t, std::uint32_t n, double x0, std::size_t depth,
               std::map<std::uint32_t, Interval>& out) {
  double total = static_cast<double>(t.total());
  double w = total > 0 ? static_cast<double>(t.value(n)) / total : 1.0;
  out[n] = {x0, x0 + w, depth};
  double x = x0;
  for (auto c : t.children(n)) {
    subdivide(t, c, x, depth + 1, out);
    x += static_cast<double>(t.value(c)) / total;
  }
}

const FlameRect* rect_for(const std::vector<FlameRect>& rects, std::int64_t node) {
  for (const auto& r : rects) {
    if (r.node == node) return &r;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("P1 geometry matches interval subdivision") {
  auto t = compute_view(folded(kP1), "samples", ViewKind::kTopDown);
  auto rects = layout_flame(t, {0.0});
  std::map<std::uint32_t, Interval> oracle;
  subdivide(t, 0, 0.0, 0, oracle);
  REQUIRE(rects.size() == oracle.size());
  for (const auto& r : rects) {
    REQUIRE(r.node >= 0);
    const auto& want = oracle.at(static_cast<std::uint32_t>(r.node));
    CHECK(r.x0 == doctest::Approx(want.x0));
    CHECK(r.x1 == doctest::Approx(want.x1));
    CHECK(r.depth == want.depth);
    CHECK(r.label == t.label(static_cast<std::uint32_t>(r.node)));
  }
  auto by_label = [&](const std::string& l) {
    for (const auto& r : rects) {
      if (r.label == l) return r;
    }
    FAIL("no rect " << l);
    return FlameRect{};
  };
  CHECK(by_label("main").x0 == 0.0);
  CHECK(by_label("main").x1 == 1.0);
  CHECK(by_label("a").x1 == doctest::Approx(0.5));
  CHECK(by_label("d").x0 == doctest::Approx(0.5));
  CHECK(by_label("b").x1 == doctest::Approx(0.3));
  CHECK(by_label("c").x0 == doctest::Approx(0.3));
  CHECK(rects.front().node == 0);
  CHECK(rects.front().context == 0);
}

TEST_CASE("narrow children merge into a trailing ellipsis rect") {
  auto t = compute_view(folded(kP1), "samples", ViewKind::kTopDown);
  auto rects = layout_flame(t, {0.4});
  std::vector<std::string> labels;
  for (const auto& r : rects) labels.push_back(r.label);
  CHECK(std::find(labels.begin(), labels.end(), "b") == labels.end());
  CHECK(std::find(labels.begin(), labels.end(), "c") == labels.end());
  const FlameRect* narrow = rect_for(rects, -1);
  REQUIRE(narrow);
  CHECK(narrow->label == kNarrowLabel);
  CHECK(narrow->depth == 3);
  CHECK(narrow->x0 == doctest::Approx(0.0));
  CHECK(narrow->x1 == doctest::Approx(0.5));
  CHECK_THROWS_AS(layout_flame(t, {0.6}), Error);
  CHECK_THROWS_AS(layout_flame(t, {-0.1}), Error);
}

TEST_CASE("zero-width subtrees are skipped and empty trees keep the root") {
  auto t = compute_view(parse_folded("main;a 4\nmain;z 0\n"), "samples", ViewKind::kTopDown);
  auto rects = layout_flame(t, {0.0});
  CHECK(rects.size() == 3);
  auto empty = compute_view(parse_folded(""), "samples", ViewKind::kTopDown);
  auto only = layout_flame(empty);
  REQUIRE(only.size() == 1);
  CHECK(only[0].x0 == 0.0);
  CHECK(only[0].x1 == 1.0);
}

TEST_CASE("rects carry module colors and source links") {
  auto t = compute_view(parse_folded("app!main@m.c:3;libc!f 2\n"), "samples", ViewKind::kTopDown);
  auto rects = layout_flame(t);
  for (const auto& r : rects) {
    if (r.label == "main") {
      CHECK(r.color_key == "app");
      REQUIRE(r.source);
      CHECK(*r.source == SourceLink{"m.c", 3});
    }
    if (r.label == "f") {
      CHECK(r.color_key == "libc");
      CHECK_FALSE(r.source);
    }
  }
}

TEST_CASE("diff rects carry tag prefixes") {
  auto d = diff(folded(kP1), folded(kP2), "samples");
  auto rects = layout_flame(d, {0.0});
  std::map<std::string, FlameRect> by;
  for (const auto& r : rects) by[r.label] = r;
  CHECK(by.count("[+] b"));
  CHECK(by.count("[D] c"));
  CHECK(by.count("[A] e"));
  CHECK(by.count("d"));
  CHECK(by["[A] e"].color_key == "added");
  CHECK(by["[A] e"].tag == DiffTag::kAdded);
  CHECK(by["[+] main"].x1 == doctest::Approx(1.0));
  // main spans m1 + m2 = 21; e contributes 1 of it
  CHECK(by["[A] e"].x1 - by["[A] e"].x0 == doctest::Approx(1.0 / 21));
}

TEST_CASE("table rows expand one level at a time") {
  auto t = compute_view(folded(kP1), "samples", ViewKind::kTopDown);
  auto root = table_rows(t);
  REQUIRE(root.size() == 1);
  CHECK(root[0].percent == doctest::Approx(100));
  CHECK(root[0].expandable);
  std::size_t count = 0;
  std::vector<std::uint32_t> stack{kNoNode};
  std::map<std::string, double> pct;
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    for (const auto& r : table_rows(t, n)) {
      ++count;
      pct[r.label] = r.percent;
      if (r.expandable) stack.push_back(r.node);
    }
  }
  CHECK(count == 6);
  CHECK(pct["main"] == doctest::Approx(100));
  CHECK(pct["a"] == doctest::Approx(50));
  CHECK_THROWS_AS(table_rows(t, 99), Error);
}

TEST_CASE("view export document") {
  auto p = folded(kP1);
  auto t = compute_view(p, "samples", ViewKind::kTopDown);
  ExportOptions o;
  o.layout.min_width = 0;
  o.profile = &p;
  auto text = export_view(t, o);
  CHECK(text == export_view(t, o));
  auto doc = json::parse(text);
  CHECK(doc["kind"] == "topdown");
  CHECK(doc["metric"] == "samples");
  CHECK(doc["total"] == 10);
  CHECK(doc["metrics"][0]["name"] == "samples");
  auto rects = layout_flame(t, o.layout);
  REQUIRE(doc["rects"].size() == rects.size());
  for (std::size_t i = 0; i < rects.size(); ++i) {
    const auto& r = doc["rects"][i];
    CHECK(r[0] == rects[i].node);
    CHECK(r[2].get<double>() == doctest::Approx(rects[i].x0));
    CHECK(r[3].get<double>() == doctest::Approx(rects[i].x1));
    CHECK(doc["labels"][r[4].get<std::size_t>()] == rects[i].label);
  }
  CHECK(doc["rows"].size() == 6);
  CHECK(doc["searchIndex"]["main"].size() == 1);
  std::vector<std::string> keys;
  for (const auto& [k, v] : doc.items()) keys.push_back(k);
  std::size_t last = 0;
  for (const auto& k : keys) {
    auto pos = text.find("\"" + k + "\":");
    REQUIRE(pos != std::string::npos);
    CHECK(pos >= last);
    last = pos;
  }
}

TEST_CASE("diff and aggregate export documents") {
  auto p1 = folded(kP1, "P1");
  auto p2 = folded(kP1Doubled, "P1x2");
  auto d = json::parse(export_diff(diff(p1, p2, "samples")));
  CHECK(d["kind"] == "diff");
  CHECK(d["view"] == "topdown");
  CHECK(d["scale"] == 1.0);
  CHECK(d["diff"][0][2] == 10);
  CHECK(d["tags"].size() == d["rects"].size());

  auto a = json::parse(export_aggregate(aggregate({&p1, &p2}, "samples")));
  CHECK(a["kind"] == "aggregate");
  CHECK(a["inputs"] == json::array({"P1", "P1x2"}));
  for (std::size_t n = 0; n < a["rows"].size(); ++n) {
    auto label = a["labels"][a["rows"][n][3].get<std::size_t>()];
    if (label == "a") {
      CHECK(a["vectors"][n] == json::array({5, 10}));
      CHECK(a["stats"][n][0] == 15);
      CHECK(a["stats"][n][3] == 7.5);
    }
  }
}
