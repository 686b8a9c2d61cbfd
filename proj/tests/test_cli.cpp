#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "gen.hpp"

#include "pfv/cli.hpp"
#include "pfv/error.hpp"

using namespace pfv;
using namespace pfv::testing;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path out_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "pfv-test-cli" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("verify accepts a correct step proof") {
  auto dir = out_dir("verify-ok");
  auto r = run({"verify", fixture("verify/odd_sum.json").string(), "--config", fixture("verify/config.json").string(),
                "--out", dir.string()});
  CHECK(r.code == kExitAccepted);
  CHECK(r.out.rfind("ACCEPTED (2 of 2", 0) == 0);
  auto manifest = json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["result"]["accepted"] == true);
  CHECK(manifest["config"]["k"] == 2);
  CHECK(manifest["config"]["seed"] == 7);
  CHECK_FALSE(manifest["config"].contains("api_key"));
  CHECK(std::filesystem::exists(dir / "report.txt"));
}

TEST_CASE("flags override the config file") {
  auto dir = out_dir("verify-override");
  auto r = run({"verify", fixture("verify/odd_sum.json").string(), "--config", fixture("verify/config.json").string(),
                "-k", "1", "--seed", "3", "--out", dir.string()});
  CHECK(r.code == kExitAccepted);
  auto manifest = json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["config"]["k"] == 1);
  CHECK(manifest["config"]["seed"] == 3);
}

TEST_CASE("verify reports errors with exit 1") {
  auto dir = out_dir("verify-localize");
  auto r = run({"verify", fixture("localize/problem.json").string(), "--mock", fixture("localize/script.json").string(), "-k",
                "1", "--out", dir.string()});
  CHECK(r.code == kExitErrorsFound);
  CHECK(r.out.find("Flagged step 7") != std::string::npos);
  CHECK(r.out.find("Lemma 5.1 incorrect") != std::string::npos);
  auto manifest = json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["result"]["flagged_steps"] == json::array({7}));
  CHECK(manifest["usage"]["total"]["calls"].get<std::size_t>() > 0);
}

TEST_CASE("verify failures exit 2") {
  auto dir = out_dir("verify-bad");
  auto missing = run({"verify", fixture("verify/odd_sum.json").string(), "--mock", "/nonexistent/script.json", "--out",
                      dir.string()});
  CHECK(missing.code == kExitFailure);
  CHECK_FALSE(missing.err.empty());

  auto bad_script = dir / "bad.json";
  std::filesystem::create_directories(dir);
  write_file(bad_script, "{\"not\": \"a list\"}");
  CHECK(run({"verify", fixture("verify/odd_sum.json").string(), "--mock", bad_script.string(), "--out", dir.string()})
            .code == kExitFailure);

  auto empty_script = dir / "empty.json";
  write_file(empty_script, "[]");
  auto exhausted = run(
      {"verify", fixture("verify/odd_sum.json").string(), "--mock", empty_script.string(), "--out", dir.string()});
  CHECK(exhausted.code == kExitFailure);
  CHECK(exhausted.err.find("RolloutsExhausted") != std::string::npos);

  CHECK(run({"verify", fixture("verify/odd_sum.json").string(), "--out", dir.string()}).code == kExitFailure);
  CHECK(run({"verify"}).code == kExitFailure);
  CHECK(run({"frobnicate"}).code == kExitFailure);
  CHECK(run({"verify", fixture("verify/odd_sum.json").string(), "--mock", empty_script.string(), "--mode", "sideways"})
            .code == kExitFailure);
}

TEST_CASE("bench writes one csv row per k") {
  auto dir = out_dir("bench");
  auto r = run({"bench", fixture("bench/steps.jsonl").string(), "--mock", fixture("bench/steps_pf_script.json").string(),
                "--ks", "1,2", "--out", dir.string()});
  CHECK(r.code == kExitAccepted);
  auto csv = read_file(dir / "sweep.csv");
  auto lines = split_lines(csv);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(lines[1].rfind("1,", 0) == 0);
  CHECK(lines[2].rfind("2,", 0) == 0);
  auto metrics = json::parse(read_file(dir / "metrics.json"));
  CHECK(metrics.contains("run_config"));
  CHECK(metrics.contains("dataset"));
}

TEST_CASE("inspect") {
  auto cyclic = run({"inspect", fixture("inspect/cyclic.json").string()});
  CHECK(cyclic.code == kExitErrorsFound);
  CHECK(cyclic.err.find("CycleInDependencyGraph") != std::string::npos);
  CHECK(cyclic.err.find("Proposition 1") != std::string::npos);

  auto deep = run({"inspect", fixture("inspect/deep.json").string()});
  CHECK(deep.code == kExitAccepted);
  CHECK(deep.out.find("Depth D: 2") != std::string::npos);
  CHECK(deep.out.find("Verification order: Lemma 1.1, Proposition 1, Theorem, Theorem 2") != std::string::npos);

  auto doc = run({"inspect", fixture("golden/b2_document.in.txt").string()});
  CHECK(doc.code == kExitAccepted);
  CHECK(doc.out.find("Scope tree") != std::string::npos);

  CHECK(run({"inspect", "/nonexistent/doc.txt"}).code == kExitFailure);
}

TEST_CASE("mine from a recorded feed") {
  auto dir = out_dir("mine");
  auto r = run({"mine", "--from", "2025-02-03", "--to", "2025-02-12", "--fixture", fixture("arxiv/feed.xml").string(),
                "--mock", fixture("arxiv/triage_script.json").string(), "--page-size", "3", "--out", dir.string()});
  CHECK(r.code == kExitAccepted);
  CHECK(r.out == "retrieved 10, regex 4, retained 2\n");
  auto jsonl = read_file(dir / "worklist.jsonl");
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 2);
  auto h = json::parse(read_file(dir / "harvest.json"));
  CHECK(h["funnel"]["retained"] == 2);
  CHECK(h["usage"]["total"]["calls"] == 5);
}

TEST_CASE("config parsing") {
  RunConfig c;
  apply_config_json(c, {{"k", 4}, {"ks", {1, 2, 4}}, {"strictness", "be strict"}, {"mock_script", "s.json"}}, "/tmp/cfg");
  CHECK(c.k == 4);
  CHECK(c.ks == std::vector<std::size_t>{1, 2, 4});
  CHECK(c.pipeline.strictness == "be strict");
  CHECK(c.mock_script == "/tmp/cfg/s.json");
  CHECK_THROWS_AS(apply_config_json(c, {{"no_such_key", 1}}), Error);
  CHECK_THROWS_AS(apply_config_json(c, {{"k", "four"}}), Error);
  CHECK_THROWS_AS(apply_config_json(c, {{"api_key", "sk-123"}}), Error);

  RunConfig none;
  CHECK_THROWS_AS(validate(none), Error);
  RunConfig zero;
  zero.mock_script = "x.json";
  zero.k = 0;
  CHECK_THROWS_AS(validate(zero), Error);
}

TEST_CASE("binary entry point") {
  auto dir = out_dir("binary");
  std::string cmd = std::string(PFV_BINARY) + " inspect " + fixture("inspect/deep.json").string() + " > " +
                    (std::filesystem::temp_directory_path() / "pfv-test-cli" / "binary.txt").string();
  CHECK(std::system(cmd.c_str()) == 0);
}
