#include <algorithm>

#include "doctest.h"
#include "gen.hpp"

#include "pfv/error.hpp"
#include "pfv/miner.hpp"

using namespace pfv;
using namespace pfv::testing;
using nlohmann::json;

namespace {

std::unique_ptr<Gateway> gateway_for(const json& script) {
  Gateway::Options o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return std::make_unique<Gateway>(std::make_shared<ScriptedBackend>(ScriptedBackend::from_json(script)), o);
}

ArxivRecord record(std::optional<std::string> comment) {
  ArxivRecord r;
  r.arxiv_id = "2502.00001";
  r.version = 2;
  r.primary_category = "math.NT";
  r.published = "2025-02-03";
  r.revision_comment = std::move(comment);
  return r;
}

const DateWindow kWindow{"2025-02-03", "2025-02-12"};

}  // namespace

TEST_CASE("regex filter") {
  CHECK(regex_filter("14 pages, 1 figure, Minor corrections to Theorem 1.5 and Lemma 2.1."));
  CHECK(regex_filter("The proof of Lemma 5 is incorrect: the inclusion fails."));
  CHECK(regex_filter("Lemma 4.1 has been corrected after a reader pointed out a mistake in the calculations."));
  CHECK(regex_filter("ERRATUM to PROPOSITION 2"));
  CHECK_FALSE(regex_filter("Added references and improved exposition."));
  CHECK_FALSE(regex_filter("Fixed typos throughout"));
  CHECK_FALSE(regex_filter("Theorem 2 generalized to higher dimensions"));
  CHECK_FALSE(regex_filter(""));
  CHECK_FALSE(regex_filter(record(std::nullopt)));
  CHECK(regex_filter(record("Fixed a bug in the proof of Theorem 3")));
}

TEST_CASE("triage label parsing") {
  CHECK(parse_triage_label("major") == TriageLabel::Major);
  CHECK(parse_triage_label("  Minor\n") == TriageLabel::Minor);
  CHECK(parse_triage_label("None.") == TriageLabel::None);
  CHECK(parse_triage_label("\"MAJOR\"") == TriageLabel::Major);
  CHECK_THROWS_AS(parse_triage_label("possibly major"), Error);
  CHECK_THROWS_AS(parse_triage_label("severe"), Error);
  CHECK_THROWS_AS(parse_triage_label(""), Error);
}

TEST_CASE("triage calls") {
  auto gw = gateway_for(json::array({{{"stage", "triage"}, {"contains", "alpha"}, {"responses", {"major"}}},
                                     {{"stage", "triage"}, {"contains", "beta"}, {"responses", {"None."}}},
                                     {{"stage", "triage"}, {"contains", "gamma"}, {"responses", {"possibly major", "minor"}}},
                                     {{"stage", "triage"}, {"responses", {"possibly major"}}}}));
  CHECK(triage(record("alpha"), *gw) == TriageLabel::Major);
  CHECK(triage(record("beta"), *gw) == TriageLabel::None);
  CHECK(triage(record("gamma"), *gw) == TriageLabel::Minor);
  std::vector<std::string> warnings;
  CHECK(triage(record("delta"), *gw, &warnings) == TriageLabel::None);
  CHECK(warnings.size() == 1);
  CHECK(gw->ledger().stages().at("triage").calls == 6);
}

TEST_CASE("atom feed parsing") {
  auto records = parse_atom_feed(read_file(fixture("arxiv/feed.xml")));
  REQUIRE(records.size() == 11);
  CHECK(records[0].arxiv_id == "2502.01001");
  CHECK(records[0].version == 2);
  CHECK(records[1].version == 3);
  CHECK(records[0].published == "2025-02-03");
  CHECK(records[0].primary_category.rfind("math.", 0) == 0);
  CHECK(records[3].revision_comment == "Corrected an error in the proof of Proposition 3 & updated references");
  CHECK_FALSE(records[6].revision_comment.has_value());
  CHECK(records[7].revision_comment == "22 pages");
  CHECK(parse_atom_feed("<feed></feed>").empty());
}

TEST_CASE("harvest funnel") {
  RecordedArxivClient client(fixture("arxiv/feed.xml"));
  auto gw = gateway_for(json::parse(read_file(fixture("arxiv/triage_script.json"))));
  auto result = harvest(kWindow, client, *gw, {3, std::nullopt});
  CHECK(result.funnel.retrieved == 10);
  CHECK(result.funnel.regex_passed == 4);
  CHECK(result.funnel.retained == 2);
  REQUIRE(result.retained.size() == 2);
  CHECK(result.retained[0].record.arxiv_id == "2502.01001");
  CHECK(result.retained[0].label == TriageLabel::Minor);
  CHECK(result.retained[1].label == TriageLabel::Major);
  CHECK_FALSE(result.log.empty());

  auto entry = worklist_entry(result.retained[0]);
  CHECK(entry["id"] == "2502.01001");
  CHECK(entry["latex_source"] == "");
  CHECK(entry["source_url"].get<std::string>().find("2502.01001v1") != std::string::npos);
  auto jsonl = worklist_jsonl(result);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 2);
}

TEST_CASE("harvest edge cases") {
  RecordedArxivClient client(fixture("arxiv/feed.xml"));
  auto gw = gateway_for(json::array());
  auto empty = harvest({"2024-01-01", "2024-01-31"}, client, *gw);
  CHECK(empty.retained.empty());
  CHECK(empty.funnel.retrieved == 0);

  auto dir = std::filesystem::temp_directory_path() / "pfv-test-miner";
  std::filesystem::create_directories(dir);
  std::string feed = "<feed>";
  for (int i = 0; i < 3; ++i)
    feed += "<entry><id>http://arxiv.org/abs/2502.0900" + std::to_string(i) +
            "v2</id><published>2025-02-05T00:00:00Z</published><title>t</title><summary>s</summary>"
            "<arxiv:primary_category term=\"math.CO\"/></entry>";
  feed += "</feed>";
  write_file(dir / "nocomments.xml", feed);
  RecordedArxivClient bare(dir / "nocomments.xml");
  auto none = harvest(kWindow, bare, *gw);
  CHECK(none.funnel.retrieved == 3);
  CHECK(none.funnel.regex_passed == 0);
  CHECK(none.retained.empty());

  RecordedArxivClient missing(dir / "does-not-exist.xml");
  try {
    harvest(kWindow, missing, *gw);
    FAIL("expected ApiUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ApiUnavailable);
  }
}

TEST_CASE("live client query") {
  auto q = LiveArxivClient::query_path(kWindow, 200, 100);
  CHECK(q.find("cat:math") != std::string::npos);
  CHECK(q.find("start=200") != std::string::npos);
  CHECK(q.find("max_results=100") != std::string::npos);
  CHECK(q.find("202502030000") != std::string::npos);
}
