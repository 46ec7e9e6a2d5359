#include <doctest.h>

#include <map>
#include <set>

#include "fixtures.h"
#include "profcct/error.h"
#include "profcct/multi_profile.h"

using namespace profcct;
using namespace testsupport;

namespace {

template <typename Tree>
std::uint32_t node_at(const Tree& t, const std::vector<std::string>& labels) {
  std::uint32_t cur = 0;
  for (const auto& l : labels) {
    bool found = false;
    for (auto c : t.nodes[cur].children) {
      if (t.label(c) == l) {
        cur = c;
        found = true;
        break;
      }
    }
    REQUIRE_MESSAGE(found, l);
  }
  return cur;
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::kIo;
}

// Path -> inclusive value, computed from folded lines directly.
std::map<std::string, std::uint64_t> path_values(std::string_view text) {
  std::map<std::string, std::uint64_t> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    auto sp = line.rfind(' ');
    auto stack = std::string(line.substr(0, sp));
    auto v = std::stoull(std::string(line.substr(sp + 1)));
    for (std::size_t i = 0; i <= stack.size(); ++i) {
      if (i == stack.size() || stack[i] == ';') out[stack.substr(0, i)] += v;
    }
  }
  return out;
}

std::string joined(const std::vector<std::string>& labels) {
  std::string s;
  for (const auto& l : labels) s += (s.empty() ? "" : ";") + l;
  return s;
}

}  // namespace

TEST_CASE("diff of P1 and P2 against the path-set oracle") {
  auto p1 = folded(kP1, "P1");
  auto p2 = folded(kP2, "P2");
  auto d = diff(p1, p2, "samples");
  auto v1 = path_values(kP1);
  auto v2 = path_values(kP2);
  std::set<std::string> paths;
  for (const auto& [k, v] : v1) paths.insert(k);
  for (const auto& [k, v] : v2) paths.insert(k);
  paths.erase("");
  CHECK(d.nodes.size() == paths.size() + 1);
  for (std::uint32_t n = 1; n < d.nodes.size(); ++n) {
    auto path = joined(d.path_labels(n));
    REQUIRE(paths.count(path));
    bool in1 = v1.count(path), in2 = v2.count(path);
    DiffTag want = !in1 ? DiffTag::kAdded
                   : !in2 ? DiffTag::kDeleted
                   : v2[path] > v1[path] ? DiffTag::kIncreased
                   : v2[path] < v1[path] ? DiffTag::kDecreased
                                         : DiffTag::kUnchanged;
    CHECK_MESSAGE(d.nodes[n].tag == want, path);
    if (in1 && in2) {
      CHECK(d.exact_delta(n) == static_cast<std::int64_t>(v2[path]) - static_cast<std::int64_t>(v1[path]));
    } else {
      CHECK_FALSE(d.delta(n));
    }
  }
  CHECK(d.nodes[node_at(d, {"main", "a", "b"})].tag == DiffTag::kIncreased);
  CHECK(d.exact_delta(node_at(d, {"main", "a", "b"})) == 2);
  CHECK(d.nodes[node_at(d, {"main", "a", "c"})].tag == DiffTag::kDeleted);
  CHECK(d.nodes[node_at(d, {"main", "e"})].tag == DiffTag::kAdded);
  CHECK(d.nodes[node_at(d, {"main", "d"})].tag == DiffTag::kUnchanged);
  CHECK(d.exact_delta(node_at(d, {"main"})) == 1);
  CHECK(d.nodes[node_at(d, {"main", "a"})].tag == DiffTag::kUnchanged);
  auto main = node_at(d, {"main"});
  CHECK(d.ratio(main) == doctest::Approx(1.1));
  CHECK(d.width(main) == doctest::Approx(21));
}

TEST_CASE("diff against itself and against an empty profile") {
  auto p1 = folded(kP1);
  auto same = diff(p1, p1, "samples");
  for (std::uint32_t n = 0; n < same.nodes.size(); ++n) {
    CHECK(same.nodes[n].tag == DiffTag::kUnchanged);
    CHECK(same.exact_delta(n) == 0);
  }
  auto empty = parse_folded("");
  auto grown = diff(empty, p1, "samples");
  for (std::uint32_t n = 1; n < grown.nodes.size(); ++n) CHECK(grown.nodes[n].tag == DiffTag::kAdded);
}

TEST_CASE("diff normalization scales the second side") {
  auto p1 = folded(kP1);
  auto p2 = folded(kP1Doubled);
  DiffOptions o;
  o.normalize_by_total = true;
  auto d = diff(p1, p2, "samples", o);
  CHECK(d.scale == doctest::Approx(0.5));
  for (std::uint32_t n = 0; n < d.nodes.size(); ++n) {
    CHECK(*d.delta(n) == doctest::Approx(0.0));
    CHECK_FALSE(d.exact_delta(n));
  }
  auto raw = diff(p1, p2, "samples");
  CHECK(raw.nodes[0].tag == DiffTag::kIncreased);
}

TEST_CASE("diff tags and prefixes") {
  CHECK(tag_prefix(DiffTag::kAdded) == "[A]");
  CHECK(tag_prefix(DiffTag::kDeleted) == "[D]");
  CHECK(tag_prefix(DiffTag::kIncreased) == "[+]");
  CHECK(tag_prefix(DiffTag::kDecreased) == "[-]");
  CHECK(tag_prefix(DiffTag::kUnchanged).empty());
  CHECK(to_string(DiffTag::kAdded) == "added");
}

TEST_CASE("diff on other view kinds and mismatched metrics") {
  auto p1 = folded(kP1);
  auto p2 = folded(kP2);
  DiffOptions o;
  o.kind = ViewKind::kBottomUp;
  auto d = diff(p1, p2, "samples", o);
  CHECK(d.nodes[node_at(d, {"b"})].tag == DiffTag::kIncreased);
  CHECK(d.nodes[node_at(d, {"c"})].tag == DiffTag::kDeleted);
  CHECK(d.nodes[node_at(d, {"e"})].tag == DiffTag::kAdded);
  auto other = parse_folded("main 1\n", "cycles");
  CHECK(kind_of([&] { diff(p1, other, "samples"); }) == ErrorKind::kMetricMismatch);
}

TEST_CASE("aggregate P1 with its doubled copy") {
  auto p1 = folded(kP1, "P1");
  auto p2 = folded(kP1Doubled, "P1x2");
  auto t = aggregate({&p1, &p2}, "samples");
  CHECK(t.inputs == std::vector<std::string>{"P1", "P1x2"});
  auto a = node_at(t, {"main", "a"});
  CHECK(t.nodes[a].values == std::vector<Count>{5u, 10u});
  CHECK(t.nodes[a].stats.sum == 15);
  CHECK(t.nodes[a].stats.min == 5u);
  CHECK(t.nodes[a].stats.max == 10u);
  CHECK(*t.nodes[a].stats.mean == doctest::Approx(7.5));
  CHECK(histogram(t, {"main", "a"}) == std::vector<Count>{5u, 10u});
  CHECK(histogram(t, a) == std::vector<Count>{5u, 10u});
  CHECK(t.total() == 30);
  CHECK(*t.primary(a) == doctest::Approx(15));
}

TEST_CASE("aggregate of one profile is the identity") {
  auto p1 = folded(kP1);
  auto t = aggregate({&p1}, "samples");
  auto b = node_at(t, {"main", "a", "b"});
  CHECK(t.nodes[b].values == std::vector<Count>{3u});
  CHECK(t.nodes[b].stats.sum == 3);
  CHECK(t.nodes[b].stats.min == 3u);
  CHECK(*t.nodes[b].stats.mean == doctest::Approx(3));
}

TEST_CASE("aggregate over disjoint paths ignores missing entries") {
  auto p1 = folded(kP1);
  auto pd = folded(kPDisjoint);
  auto t = aggregate({&p1, &pd}, "samples");
  auto z = node_at(t, {"main", "z"});
  CHECK(t.nodes[z].values == std::vector<Count>{std::nullopt, 4u});
  CHECK(*t.nodes[z].stats.mean == doctest::Approx(4));
  CHECK(t.nodes[z].stats.present == 1);
  AggregateOptions o;
  o.missing_as_zero = true;
  auto zt = aggregate({&p1, &pd}, "samples", o);
  auto z0 = node_at(zt, {"main", "z"});
  CHECK(zt.nodes[z0].values == std::vector<Count>{0u, 4u});
  CHECK(*zt.nodes[z0].stats.mean == doctest::Approx(2));
}

TEST_CASE("aggregate errors") {
  auto p1 = folded(kP1);
  auto other = parse_folded("main 1\n", "cycles");
  other.mutable_meta().name = "other";
  CHECK(kind_of([] { aggregate({}, "samples"); }) == ErrorKind::kArity);
  try {
    aggregate({&p1, &other}, "samples");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMetricMismatch);
    CHECK(std::string(e.what()).find("other") != std::string::npos);
  }
  auto t = aggregate({&p1}, "samples");
  CHECK(kind_of([&] { histogram(t, {"main", "q"}); }) == ErrorKind::kUnknownPath);
  CHECK(kind_of([&] { histogram(t, 999u); }) == ErrorKind::kUnknownPath);
}

TEST_CASE("histogram keeps input order") {
  std::vector<Profile> snaps;
  for (std::uint64_t v : {10, 20, 30, 40}) {
    snaps.push_back(folded("main;leak " + std::to_string(v) + "\n", "t" + std::to_string(v)));
  }
  std::vector<const Profile*> ptrs;
  for (const auto& s : snaps) ptrs.push_back(&s);
  auto t = aggregate(ptrs, "samples");
  CHECK(histogram(t, {"main", "leak"}) == std::vector<Count>{10u, 20u, 30u, 40u});
}

TEST_CASE("compute stats") {
  auto s = compute_stats({3u, std::nullopt, 9u});
  CHECK(s.sum == 12);
  CHECK(s.min == 3u);
  CHECK(s.max == 9u);
  CHECK(*s.mean == doctest::Approx(6));
  CHECK(s.present == 2);
  auto none = compute_stats({std::nullopt});
  CHECK(none.sum == 0);
  CHECK_FALSE(none.mean);
}

TEST_CASE("correlate projects alloc onto use") {
  auto p = alloc_use_fixture();
  CHECK(roles(p) == std::vector<std::string>{"alloc", "use"});
  auto find = [&](std::vector<std::string> names) {
    NodeId cur = p.root();
    for (const auto& n : names) {
      NodeId next = kNoNode;
      for (auto c : p.node(cur).children) {
        if (p.frame_of(c).function_name == n) next = c;
      }
      REQUIRE(next != kNoNode);
      cur = next;
    }
    return cur;
  };
  auto leaf_values = [](const Profile& proj) {
    std::map<std::string, std::uint64_t> out;
    for (NodeId n = 1; n < proj.node_count(); ++n) {
      if (auto v = proj.count(n, 0)) out[proj.frame_of(n).function_name] += *v;
    }
    return out;
  };
  auto a1 = correlate(p, find({"main", "A1"}), "alloc", "use");
  CHECK(leaf_values(a1) == std::map<std::string, std::uint64_t>{{"U1", 6}, {"U2", 4}});
  CHECK(total(a1, 0) == 10);
  auto a2 = correlate(p, find({"main", "A2"}), "alloc", "use");
  CHECK(leaf_values(a2) == std::map<std::string, std::uint64_t>{{"U1", 9}});
  CHECK(kind_of([&] { correlate(p, find({"main", "A1"}), "alloc", "reuse"); }) == ErrorKind::kUnknownRole);
  CHECK(kind_of([&] { correlate(p, 999, "alloc", "use"); }) == ErrorKind::kUnknownPath);
  auto empty = correlate(p, find({"main"}), "alloc", "use");
  CHECK(total(empty, 0) == 0);
}
