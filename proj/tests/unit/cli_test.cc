#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "fixtures.h"
#include "profcct/cli.h"
#include "profcct/io.h"
#include "profcct/native_format.h"

using namespace profcct;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

struct Dir {
  fs::path path = fs::temp_directory_path() / "profcct_cli_test";
  Dir() {
    fs::create_directories(path);
    write_file_atomic(path / "p1.folded", std::string(kP1));
    write_file_atomic(path / "p2.folded", std::string(kP2));
  }
  ~Dir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

Run run(std::vector<std::string> args, bool color = false) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err, CliOptions{color});
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("convert then info reports P1's shape") {
  Dir d;
  auto c = run({"convert", d / "p1.folded", "-o", d / "p1.pcct"});
  REQUIRE(c.code == 0);
  CHECK(c.out.empty());
  CHECK(read_file(d / "p1.pcct").substr(0, 4) == "PCCT");
  auto i = run({"info", d / "p1.pcct"});
  REQUIRE(i.code == 0);
  CHECK(i.out.find("format\tnative\n") != std::string::npos);
  CHECK(i.out.find("nodes\t6\n") != std::string::npos);
  CHECK(i.out.find("metrics\t1\n") != std::string::npos);
  CHECK(i.out.find("metric\t0\tsamples\tsamples\tadditive\tsum\t10\n") != std::string::npos);
}

TEST_CASE("convert back to folded reproduces canonical text") {
  Dir d;
  REQUIRE(run({"convert", d / "p1.folded", "-o", d / "p1.pcct"}).code == 0);
  auto f = run({"convert", d / "p1.pcct", "--to", "folded"});
  REQUIRE(f.code == 0);
  CHECK(f.out == kP1);
  REQUIRE(run({"convert", d / "p1.pcct", "-o", d / "back.folded"}).code == 0);
  CHECK(read_file(d / "back.folded") == kP1);
}

TEST_CASE("top over the three views") {
  Dir d;
  auto bu = run({"top", d / "p1.folded", "--view", "bottomup", "-n", "3"});
  REQUIRE(bu.code == 0);
  CHECK(bu.out == "d\t5\t50.00\nb\t3\t30.00\nc\t2\t20.00\n");
  auto td = run({"top", d / "p1.folded"});
  CHECK(td.out == "main;d\t5\t50.00\nmain;a;b\t3\t30.00\nmain;a;c\t2\t20.00\n");
  auto flat = run({"top", d / "p1.folded", "--view", "flat", "-n", "1"});
  CHECK(flat.out == "d\t5\t50.00\n");
  auto incl = run({"top", d / "p1.folded", "--view", "bottomup", "--callee-inclusive", "-n", "2"});
  CHECK(incl.out == "main\t10\t100.00\na\t5\t50.00\n");
}

TEST_CASE("pretty top output") {
  Dir d;
  auto plain = run({"top", d / "p1.folded", "--pretty", "-n", "1"});
  CHECK(plain.out.find("\x1b[") == std::string::npos);
  CHECK(plain.out.find("main;d") != std::string::npos);
  CHECK(plain.out.find("50.00%") != std::string::npos);
  auto colored = run({"top", d / "p1.folded", "--pretty", "-n", "1"}, true);
  CHECK(colored.out.find("\x1b[1m") != std::string::npos);
}

TEST_CASE("view, diff and aggregate write JSON documents") {
  Dir d;
  auto v = run({"view", d / "p1.folded", "--threshold", "0.25"});
  REQUIRE(v.code == 0);
  auto doc = nlohmann::json::parse(v.out);
  CHECK(doc["total"] == 10);
  auto df = run({"diff", d / "p1.folded", d / "p2.folded", "-o", d / "diff.json"});
  REQUIRE(df.code == 0);
  CHECK(nlohmann::json::parse(read_file(d / "diff.json"))["kind"] == "diff");
  auto ag = run({"aggregate", d / "p1.folded", d / "p2.folded"});
  REQUIRE(ag.code == 0);
  CHECK(nlohmann::json::parse(ag.out)["inputs"] == nlohmann::json::array({"p1", "p2"}));
}

TEST_CASE("derive and correlate") {
  Dir d;
  auto dv = run({"derive", d / "p1.folded", "--formula", "samples*2", "--as", "twice", "-o", d / "x.pcct"});
  REQUIRE(dv.code == 0);
  auto info = run({"info", d / "x.pcct"});
  CHECK(info.out.find("metric\t1\ttwice\t\tderived\t") != std::string::npos);
  auto bad = run({"derive", d / "p1.folded", "--formula", "samples//2", "--as", "x"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("FormulaError") != std::string::npos);

  write_file_atomic(d / "au.pcct", serialize(alloc_use_fixture()));
  auto cr = run({"correlate", d / "au.pcct", "--roles", "alloc:use", "--anchor", "main;A1"});
  REQUIRE(cr.code == 0);
  CHECK(nlohmann::json::parse(cr.out)["total"] == 10);
  CHECK(run({"correlate", d / "au.pcct", "--roles", "alloc", "--anchor", "1"}).code == 1);
  CHECK(run({"correlate", d / "au.pcct", "--roles", "alloc:use", "--anchor", "main;Q"}).code == 2);
}

TEST_CASE("usage and data errors") {
  Dir d;
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"top", d / "p1.folded", "--view", "sideways"}).code == 1);
  CHECK(run({"top", d / "p1.folded", "--threshold", "3"}).code == 1);
  auto missing = run({"info", d / "missing.pcct"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("profcct: IoError: ") == 0);
  auto metric = run({"top", d / "p1.folded", "--metric", "cycles"});
  CHECK(metric.code == 2);
  CHECK(metric.err.find("UnknownMetric") != std::string::npos);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"--version"}).out == "profcct 1.0\n");
}

TEST_CASE("a failed command leaves no output file") {
  Dir d;
  write_file_atomic(d / "bad.folded", "main;a x\n");
  CHECK(run({"convert", d / "bad.folded", "-o", d / "out.pcct"}).code == 2);
  CHECK_FALSE(fs::exists(d / "out.pcct"));
}
