#include <doctest.h>

#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "fixtures.h"
#include "profcct/io.h"
#include "profcct/layout.h"
#include "profcct/server.h"

using namespace profcct;
using namespace testsupport;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  std::shared_ptr<Session> session;
  Api api;

  Workspace()
      : root(fs::temp_directory_path() / "profcct_server_test"),
        session(std::make_shared<Session>(root)),
        api(session) {
    fs::create_directories(root / "src");
    write_file_atomic(root / "src" / "m.c", "int a;\nint b;\nint c;\nint d;\n");
    write_file_atomic(root.parent_path() / "profcct_secret.txt", "secret\n");
    session->add(std::make_shared<const Profile>(folded(kP1, "P1")));
    session->add(std::make_shared<const Profile>(folded(kP2, "P2")));
    session->add(std::make_shared<const Profile>(folded(kP1Doubled, "P1x2")));
    session->add(std::make_shared<const Profile>(alloc_use_fixture()));
    session->add(std::make_shared<const Profile>(
        parse_folded("app!main@src/m.c:1;app!f@src/m.c:2 3\napp!main@src/m.c:1;app!g@src/m.c:2 4\n")));
  }
  ~Workspace() { fs::remove_all(root); }

  json get_json(const std::string& path, QueryParams params, int status = 200) {
    auto r = api.get(path, params);
    CHECK_MESSAGE(r.status == status, path << " -> " << r.body);
    return json::parse(r.body);
  }
};

}  // namespace

TEST_CASE("profiles endpoint lists handles and metadata") {
  Workspace w;
  auto doc = w.get_json("/api/profiles", {});
  REQUIRE(doc["profiles"].size() == 5);
  CHECK(doc["profiles"][0]["handle"] == "0");
  CHECK(doc["profiles"][0]["name"] == "P1");
  CHECK(doc["profiles"][0]["metrics"][0]["total"] == 10);
  CHECK(doc["profiles"][3]["roles"] == json::array({"alloc", "use"}));
}

TEST_CASE("view endpoint returns the export document") {
  Workspace w;
  auto r = w.api.get("/api/view", {{"p", "0"}, {"kind", "topdown"}, {"metric", "0"}});
  REQUIRE(r.status == 200);
  auto p = folded(kP1, "P1");
  ExportOptions o;
  o.profile = &p;
  CHECK(r.body == export_view(compute_view(p, "samples", ViewKind::kTopDown), o));
  auto by_name = w.api.get("/api/view", {{"p", "0"}, {"metric", "samples"}});
  CHECK(by_name.body == r.body);
  auto pruned = w.get_json("/api/view", {{"p", "0"}, {"threshold", "0.25"}});
  bool other = false;
  for (const auto& l : pruned["labels"]) other = other || l == "«other»";
  CHECK(other);
}

TEST_CASE("error statuses") {
  Workspace w;
  w.get_json("/api/view", {{"p", "9"}}, 404);
  w.get_json("/api/view", {{"p", "0"}, {"metric", "nope"}}, 404);
  w.get_json("/api/view", {{"p", "0"}, {"kind", "sideways"}}, 400);
  w.get_json("/api/view", {{"p", "0"}, {"threshold", "2"}}, 400);
  w.get_json("/api/view", {}, 400);
  w.get_json("/api/nothing", {}, 404);
  w.get_json("/api/search", {{"p", "0"}, {"q", ""}}, 400);
  w.get_json("/api/node/99/hover", {{"p", "0"}}, 404);
}

TEST_CASE("diff and aggregate endpoints") {
  Workspace w;
  auto d = w.get_json("/api/diff", {{"p1", "0"}, {"p2", "1"}, {"metric", "samples"}});
  CHECK(d["kind"] == "diff");
  bool added = false;
  for (const auto& l : d["labels"]) added = added || l == "[A] e";
  CHECK(added);
  auto a = w.get_json("/api/aggregate", {{"p", "0,2"}});
  CHECK(a["inputs"] == json::array({"P1", "P1x2"}));
  w.get_json("/api/aggregate", {{"p", "0,7"}}, 404);
}

TEST_CASE("histogram endpoint returns per-input values in order") {
  Workspace w;
  auto a = w.get_json("/api/aggregate", {{"p", "2,0"}});
  std::size_t node = 0;
  for (std::size_t n = 0; n < a["rows"].size(); ++n) {
    if (a["labels"][a["rows"][n][3].get<std::size_t>()] == "a") node = n;
  }
  REQUIRE(node != 0);
  auto h = w.get_json("/api/node/" + std::to_string(node) + "/histogram", {{"agg", "2,0"}});
  CHECK(h["values"] == json::array({10, 5}));
  CHECK(h["inputs"] == json::array({"P1x2", "P1"}));
  w.get_json("/api/node/999/histogram", {{"agg", "2,0"}}, 404);
}

TEST_CASE("hover sums every context on the same source line") {
  Workspace w;
  auto f = w.get_json("/api/search", {{"p", "4"}, {"q", "f"}});
  REQUIRE(f["count"] == 1);
  auto node = f["nodes"][0].get<int>();
  auto h = w.get_json("/api/node/" + std::to_string(node) + "/hover", {{"p", "4"}});
  CHECK(h["metrics"][0]["inclusive"] == 3);
  CHECK(h["sourceLine"]["line"] == 2);
  CHECK(h["sourceLine"]["metrics"][0]["inclusive"] == 7);
  CHECK(h["sourceLine"]["nodes"].size() == 2);
  auto root = w.get_json("/api/node/0/hover", {{"p", "4"}});
  CHECK(root["sourceLine"].is_null());
}

TEST_CASE("correlate endpoint") {
  Workspace w;
  auto p = w.session->find("3");
  NodeId a1 = kNoNode;
  for (NodeId n = 0; n < p->node_count(); ++n) {
    if (n && p->frame_of(n).function_name == "A1") a1 = n;
  }
  auto doc = w.get_json("/api/correlate",
                        {{"p", "3"}, {"anchor", std::to_string(a1)}, {"from", "alloc"}, {"to", "use"}});
  CHECK(doc["total"] == 10);
  w.get_json("/api/correlate", {{"p", "3"}, {"anchor", std::to_string(a1)}, {"from", "alloc"}, {"to", "x"}},
             400);
  w.get_json("/api/correlate", {{"p", "3"}, {"anchor", "999"}, {"from", "alloc"}, {"to", "use"}}, 404);
}

TEST_CASE("search and rows endpoints") {
  Workspace w;
  auto s = w.get_json("/api/search", {{"p", "0"}, {"q", "a"}});
  CHECK(s["count"] == 2);
  auto root = w.get_json("/api/rows", {{"p", "0"}});
  REQUIRE(root["rows"].size() == 1);
  CHECK(root["rows"][0]["percent"] == 100.0);
  auto kids = w.get_json("/api/rows", {{"p", "0"}, {"node", "1"}});
  CHECK(kids["rows"].size() == 2);
  CHECK(kids["rows"][0]["label"] == "a");
  CHECK(kids["rows"][0]["percent"] == 50.0);
  w.get_json("/api/rows", {{"p", "0"}, {"node", "77"}}, 404);
}

TEST_CASE("source endpoint is confined to the workspace root") {
  Workspace w;
  auto r = w.api.get("/api/source", {{"file", "src/m.c"}, {"from", "2"}, {"to", "3"}});
  CHECK(r.status == 200);
  CHECK(r.content_type.find("text/plain") == 0);
  CHECK(r.body == "int b;\nint c;\n");
  CHECK(w.api.get("/api/source", {{"file", "../profcct_secret.txt"}}).status == 403);
  CHECK(w.api.get("/api/source", {{"file", "src/../../profcct_secret.txt"}}).status == 403);
  CHECK(w.api.get("/api/source", {{"file", (w.root.parent_path() / "profcct_secret.txt").string()}}).status ==
        403);
  CHECK(w.api.get("/api/source", {{"file", "src/none.c"}}).status == 404);
  CHECK(w.api.get("/api/source", {{"file", "src/m.c"}, {"from", "3"}, {"to", "1"}}).status == 400);
}

TEST_CASE("loading a profile leaves existing snapshots and handles alone") {
  Workspace w;
  auto before = w.api.get("/api/view", {{"p", "0"}});
  auto held = w.session->find("0");
  auto handle = w.session->add(std::make_shared<const Profile>(folded(kPDisjoint)));
  CHECK(handle == "5");
  CHECK(w.session->find("0") == held);
  CHECK(w.api.get("/api/view", {{"p", "0"}}).body == before.body);
}

TEST_CASE("HTTP round trip") {
  Workspace w;
  ServerOptions o;
  o.port = 0;
  Server server(w.session, o);
  int port = server.bind();
  REQUIRE(port > 0);
  std::thread t([&] { server.run(); });
  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 50 && !(res = client.Get("/api/profiles")); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["profiles"].size() == 5);
  auto view = client.Get("/api/view?p=0&kind=topdown&metric=0");
  REQUIRE(view);
  CHECK(view->body == w.api.get("/api/view", {{"p", "0"}, {"kind", "topdown"}, {"metric", "0"}}).body);
  auto forbidden = client.Get("/api/source?file=../profcct_secret.txt");
  REQUIRE(forbidden);
  CHECK(forbidden->status == 403);
  auto page = client.Get("/");
  REQUIRE(page);
  CHECK(page->status == 200);
  server.stop();
  t.join();
}
