#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "fixtures.h"
#include "generators.h"
#include "profcct/derived.h"
#include "profcct/error.h"
#include "profcct/ingest.h"
#include "profcct/layout.h"
#include "profcct/multi_profile.h"
#include "profcct/native_format.h"

using namespace profcct;
using namespace testsupport;

namespace {

constexpr int kRounds = 40;
const GenLimits kSmall{2000, 30, 20};

}  // namespace

TEST_CASE("top-down values satisfy the inclusive recurrence and the prefix oracle") {
  std::mt19937_64 rng(101);
  for (int round = 0; round < kRounds; ++round) {
    auto c = random_corpus(rng, kSmall);
    auto p = c.profile();
    auto t = compute_view(p, "samples", ViewKind::kTopDown);
    auto incl = inclusive_by_prefix(c);
    auto index = frame_index(c);
    for (std::uint32_t n = 0; n < t.nodes.size(); ++n) {
      std::uint64_t sum = t.nodes[n].exclusive;
      for (auto ch : t.children(n)) sum += t.nodes[ch].inclusive;
      REQUIRE(t.nodes[n].inclusive == sum);
      if (n == 0) continue;
      PathKey key;
      REQUIRE(node_key(p, n, index, key));
      REQUIRE(t.nodes[n].inclusive == incl[key]);
    }
    REQUIRE(t.total() == total(c));
  }
}

TEST_CASE("bottom-up chains and flat functions agree with the sample oracles") {
  std::mt19937_64 rng(202);
  for (int round = 0; round < kRounds; ++round) {
    auto c = random_corpus(rng, kSmall);
    auto p = c.profile();
    auto td = compute_view(p, "samples", ViewKind::kTopDown);
    auto bu = compute_view(p, "samples", ViewKind::kBottomUp);
    auto fl = compute_view(p, "samples", ViewKind::kFlat);
    auto chains = caller_chains(c);
    auto self = self_by_function(c);

    // Every bottom-up node's carried self cost equals the chain oracle.
    std::vector<std::string> key(bu.nodes.size());
    std::size_t nonzero = 0;
    for (std::uint32_t n = 1; n < bu.nodes.size(); ++n) {
      auto parent = bu.nodes[n].parent;
      key[n] = (parent == 0 ? "" : key[parent] + "\n") + function_key(bu.frames[bu.nodes[n].frame]);
      auto it = chains.find(key[n]);
      REQUIRE(bu.nodes[n].exclusive == (it == chains.end() ? 0 : it->second));
    }
    for (const auto& [k, v] : chains) nonzero += v != 0;
    std::size_t bu_nonzero = 0;
    for (std::uint32_t n = 1; n < bu.nodes.size(); ++n) bu_nonzero += bu.nodes[n].exclusive != 0;
    REQUIRE(bu_nonzero == nonzero);

    // Level 1 == Σ top-down exclusive per function == flat exclusive.
    std::map<std::string, std::uint64_t> td_self;
    for (std::uint32_t n = 1; n < td.nodes.size(); ++n) {
      td_self[function_key(function_of(td.frames[td.nodes[n].frame]))] += td.nodes[n].exclusive;
    }
    std::map<std::string, std::uint64_t> level1, flat_self;
    std::uint64_t level1_sum = 0;
    for (auto n : bu.children(0)) {
      level1[function_key(bu.frames[bu.nodes[n].frame])] = bu.value(n);
      level1_sum += bu.value(n);
    }
    for (std::uint32_t n = 1; n < fl.nodes.size(); ++n) {
      if (fl.nodes[n].role == ViewRole::kFrame) {
        flat_self[function_key(fl.frames[fl.nodes[n].frame])] = fl.nodes[n].exclusive;
      }
    }
    REQUIRE(level1_sum == td.total());
    for (const auto& [f, v] : self) {
      REQUIRE(td_self[f] == v);
      REQUIRE(flat_self[f] == v);
      if (v) REQUIRE(level1[f] == v);
    }
    auto uni = union_inclusive_by_function(c);
    for (std::uint32_t n = 1; n < fl.nodes.size(); ++n) {
      if (fl.nodes[n].role == ViewRole::kFrame) {
        REQUIRE(fl.nodes[n].inclusive == uni[function_key(fl.frames[fl.nodes[n].frame])]);
      }
    }
  }
}

TEST_CASE("transforms preserve the root value") {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int round = 0; round < kRounds; ++round) {
    auto p = random_corpus(rng, kSmall).profile();
    for (auto kind : {ViewKind::kTopDown, ViewKind::kBottomUp, ViewKind::kFlat}) {
      auto t = compute_view(p, "samples", kind);
      auto total = t.total();
      double th = unit(rng);
      REQUIRE(prune(t, th).total() == total);
      auto pr = prune(t, th);
      for (std::uint32_t n = 1; n < pr.nodes.size(); ++n) {
        if (pr.nodes[n].role != ViewRole::kOther) {
          REQUIRE(static_cast<long double>(pr.value(n)) >= static_cast<long double>(th) * total);
        }
      }
      REQUIRE(collapse_recursion(t).total() == total);
      REQUIRE(truncate_depth(t, 3).total() == total);

      // Eliding one random internal node.
      std::vector<std::uint32_t> internal;
      for (std::uint32_t n = 1; n < t.nodes.size(); ++n) {
        if (!t.children(n).empty()) internal.push_back(n);
      }
      if (internal.empty()) continue;
      auto victim = internal[rng() % internal.size()];
      auto out = apply_visitor(t, TraversalOrder::kPre, [&](const ViewTree&, std::uint32_t n, std::size_t) {
        return n == victim ? Directive::kElide : Directive::kKeep;
      });
      REQUIRE(out.total() == total);
      REQUIRE(out.nodes.size() < t.nodes.size());
      if (kind == ViewKind::kTopDown) {
        for (std::uint32_t n = 0; n < out.nodes.size(); ++n) {
          std::uint64_t sum = out.nodes[n].exclusive;
          for (auto ch : out.children(n)) sum += out.nodes[ch].inclusive;
          REQUIRE(out.nodes[n].inclusive == sum);
        }
      }
    }
  }
}

TEST_CASE("collapsed top-down trees keep the recurrence") {
  std::mt19937_64 rng(304);
  for (int round = 0; round < kRounds; ++round) {
    auto t = collapse_recursion(compute_view(random_corpus(rng, kSmall).profile(), "samples",
                                             ViewKind::kTopDown));
    for (std::uint32_t n = 0; n < t.nodes.size(); ++n) {
      std::uint64_t sum = t.nodes[n].exclusive;
      for (auto ch : t.children(n)) {
        sum += t.nodes[ch].inclusive;
        if (t.nodes[ch].role == ViewRole::kFrame && t.nodes[n].role == ViewRole::kFrame) {
          REQUIRE(function_of(t.frames[t.nodes[ch].frame]) != function_of(t.frames[t.nodes[n].frame]));
        }
      }
      REQUIRE(t.nodes[n].inclusive == sum);
    }
  }
}

TEST_CASE("diff tags partition the union, and swapping negates") {
  std::mt19937_64 rng(404);
  for (int round = 0; round < kRounds; ++round) {
    auto c1 = random_corpus(rng, kSmall);
    auto c2 = mutate(rng, c1, kSmall);
    auto p1 = c1.profile(), p2 = c2.profile();
    auto d = diff(p1, p2, "samples");
    auto r = diff(p2, p1, "samples");
    REQUIRE(d.nodes.size() == r.nodes.size());
    // Display labels drop line numbers, so key by full frame spelling.
    auto spelled = [](const DiffTree& t, std::uint32_t n) {
      std::string s;
      for (; n != 0; n = t.nodes[n].parent) s = format_folded_frame(t.frames[t.nodes[n].frame]) + ";" + s;
      return s;
    };
    std::map<std::string, std::uint32_t> rev;
    for (std::uint32_t n = 0; n < r.nodes.size(); ++n) REQUIRE(rev.emplace(spelled(r, n), n).second);
    auto swapped = [](DiffTag t) {
      switch (t) {
        case DiffTag::kAdded: return DiffTag::kDeleted;
        case DiffTag::kDeleted: return DiffTag::kAdded;
        case DiffTag::kIncreased: return DiffTag::kDecreased;
        case DiffTag::kDecreased: return DiffTag::kIncreased;
        default: return t;
      }
    };
    for (std::uint32_t n = 0; n < d.nodes.size(); ++n) {
      auto m = rev.at(spelled(d, n));
      REQUIRE(r.nodes[m].tag == swapped(d.nodes[n].tag));
      REQUIRE(r.exact_delta(m) == (d.exact_delta(n) ? std::optional<std::int64_t>(-*d.exact_delta(n))
                                                     : std::nullopt));
      // Ancestor rule: compared tags only below compared parents.
      auto tag = d.nodes[n].tag;
      if (n && tag != DiffTag::kAdded && tag != DiffTag::kDeleted) {
        auto pt = d.nodes[d.nodes[n].parent].tag;
        REQUIRE(pt != DiffTag::kAdded);
        REQUIRE(pt != DiffTag::kDeleted);
      }
    }
  }
}

TEST_CASE("aggregate stats are consistent with their vectors") {
  std::mt19937_64 rng(505);
  for (int round = 0; round < kRounds / 2; ++round) {
    auto base = random_corpus(rng, kSmall);
    std::vector<Profile> ps;
    std::size_t k = 1 + rng() % 4;
    for (std::size_t i = 0; i < k; ++i) ps.push_back(mutate(rng, base, kSmall).profile("in" + std::to_string(i)));
    std::vector<const Profile*> ptrs;
    for (const auto& p : ps) ptrs.push_back(&p);
    auto t = aggregate(ptrs, "samples");
    for (const auto& n : t.nodes) {
      REQUIRE(n.values.size() == k);
      std::uint64_t sum = 0;
      std::size_t present = 0;
      for (const auto& v : n.values) {
        if (v) {
          sum += *v;
          ++present;
        }
      }
      REQUIRE(n.stats.sum == sum);
      REQUIRE(n.stats.present == present);
      if (present) REQUIRE(*n.stats.mean * static_cast<double>(present) == doctest::Approx(static_cast<double>(sum)));
    }
  }
}

TEST_CASE("native round trip of rich profiles") {
  std::mt19937_64 rng(606);
  for (int round = 0; round < kRounds; ++round) {
    auto p = random_rich_profile(rng);
    auto bytes = serialize(p);
    auto q = deserialize(bytes);
    std::string why;
    REQUIRE_MESSAGE(structurally_equal(p, q, &why), why);
    REQUIRE(serialize(q) == bytes);
  }
}

TEST_CASE("native reader never crashes on corrupted input") {
  std::mt19937_64 rng(607);
  for (int round = 0; round < kRounds; ++round) {
    auto bytes = serialize(random_rich_profile(rng, 40));
    for (int flip = 0; flip < 20; ++flip) {
      auto bad = bytes;
      bad[rng() % bad.size()] = static_cast<char>(rng() & 0xff);
      try {
        deserialize(bad);
      } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::kFormat);
      }
    }
  }
}

TEST_CASE("folded emission round-trips canonical text") {
  std::mt19937_64 rng(707);
  for (int round = 0; round < kRounds; ++round) {
    auto p = random_corpus(rng, kSmall).profile();
    auto text = emit_folded(p, "samples");
    auto q = parse_folded(text);
    REQUIRE(emit_folded(q, "samples") == text);
    REQUIRE(total(q, 0) == total(p, 0));
  }
}

TEST_CASE("pprof fixtures keep their totals") {
  std::mt19937_64 rng(808);
  for (int round = 0; round < kRounds; ++round) {
    auto fx = random_pprof(rng);
    auto p = load_profile(round % 2 ? gzip(encode_pprof(fx)) : encode_pprof(fx));
    REQUIRE(p.metrics().size() == fx.sample_types.size());
    for (std::size_t m = 0; m < fx.sample_types.size(); ++m) {
      std::uint64_t want = 0;
      for (const auto& s : fx.samples) want += static_cast<std::uint64_t>(s.values[m]);
      REQUIRE(total(p, m) == want);
    }
  }
}

TEST_CASE("flame rects nest inside their parents") {
  std::mt19937_64 rng(909);
  for (int round = 0; round < kRounds; ++round) {
    auto t = compute_view(random_corpus(rng, kSmall).profile(), "samples", ViewKind::kTopDown);
    auto rects = layout_flame(t, {0.01});
    std::vector<const FlameRect*> open;
    for (const auto& r : rects) {
      REQUIRE(r.x0 >= 0.0);
      REQUIRE(r.x1 <= 1.0 + 1e-12);
      REQUIRE(r.x0 <= r.x1);
      while (open.size() > r.depth) open.pop_back();
      if (r.depth > 0) {
        REQUIRE(open.size() == r.depth);
        REQUIRE(r.x0 >= open.back()->x0 - 1e-12);
        REQUIRE(r.x1 <= open.back()->x1 + 1e-12);
      }
      open.push_back(&r);
    }
    REQUIRE(export_view(t) == export_view(t));
  }
}

TEST_CASE("formula grammar is total") {
  std::mt19937_64 rng(1001);
  const std::string alphabet = "ab1.()+-*/ e_$";
  for (int round = 0; round < 2000; ++round) {
    std::string text;
    std::size_t len = rng() % 12;
    for (std::size_t i = 0; i < len; ++i) text += alphabet[rng() % alphabet.size()];
    try {
      auto f = Formula::parse(text);
      std::vector<std::optional<double>> values(f.identifiers().size(), 2.0);
      auto once = f.evaluate(values);
      REQUIRE(once == f.evaluate(values));
    } catch (const Error& e) {
      REQUIRE(e.kind() == ErrorKind::kFormula);
      REQUIRE(e.location());
      REQUIRE(*e.location() <= text.size());
    }
  }
}

TEST_CASE("correlation conserves point values per role") {
  std::mt19937_64 rng(1102);
  for (int round = 0; round < kRounds; ++round) {
    auto p = random_rich_profile(rng);
    auto known = roles(p);
    if (std::find(known.begin(), known.end(), "alloc") == known.end()) continue;
    std::set<NodeId> anchors;
    std::uint64_t want = 0;
    for (const auto& pt : p.points()) {
      for (const auto& c : pt.contexts) {
        if (c.role == "alloc") {
          anchors.insert(c.node);
          want += pt.values[0].value_or(0);
        }
      }
    }
    std::uint64_t got = 0;
    for (auto a : anchors) got += total(correlate(p, a, "alloc", "use"), 0);
    REQUIRE(got == want);
  }
}
