#include "doctest.h"
#include "gen.hpp"
#include "golden.hpp"

#include "pfv/error.hpp"
#include "pfv/text.hpp"
#include "pfv/util.hpp"

using namespace pfv;
using namespace pfv::testing;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::IoError;
}

std::string template_doc() { return read_file(fixture("golden/b2_document.in.txt")); }

}  // namespace

TEST_CASE("golden files") {
  for (const auto& name : golden_names()) {
    auto r = check_golden(name);
    INFO(name);
    CHECK_MESSAGE(r.failure.empty(), r.failure);
  }
}

TEST_CASE("parse_pf_document") {
  auto doc = parse_pf_document(template_doc());
  REQUIRE(doc.blocks.size() == 6);
  CHECK(doc.blocks[0].tag == BlockTag::TheoremStatement);
  CHECK_FALSE(doc.blocks[0].id.has_value());
  CHECK(doc.blocks[2].tag == BlockTag::LemmaStatement);
  CHECK(doc.blocks[2].id == "1.1");
  CHECK(doc.blocks[5].tag == BlockTag::TheoremProof);
  CHECK(doc.blocks[1].line == 8);

  CHECK(code_of([] { parse_pf_document("<LEMMA_STATEMENT>\nStatement :\nx\n</LEMMA_STATEMENT>"); }) ==
        Errc::MissingId);
  CHECK(code_of([] {
          parse_pf_document("<PROPOSITION_STATEMENT id=\"1\">\nx\n<LEMMA_PROOF id=\"1.1\">\ny\n</LEMMA_PROOF>\n"
                            "</PROPOSITION_STATEMENT>");
        }) == Errc::NestedTag);
  CHECK(code_of([] { parse_pf_document("hello\n<THEOREM_STATEMENT>\nx\n</THEOREM_STATEMENT>"); }) ==
        Errc::TextOutsideTags);
  CHECK(code_of([] { parse_pf_document("<COROLLARY id=\"1\">\nx\n</COROLLARY>"); }) == Errc::MalformedTag);
  CHECK(code_of([] { parse_pf_document("<THEOREM_STATEMENT>\nx\n"); }) == Errc::MalformedTag);
}

TEST_CASE("error lines point at the offending tag") {
  try {
    parse_pf_document("<THEOREM_STATEMENT>\nStatement :\nx\n</THEOREM_STATEMENT>\n\n<LEMMA_STATEMENT>\n</LEMMA_STATEMENT>");
    FAIL("expected MissingId");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingId);
    CHECK(e.line() == 6);
  }
}

TEST_CASE("to_proof") {
  auto proof = to_proof(parse_pf_document(template_doc()), {});
  CHECK(proof.size() == 3);
  CHECK(proof.scope_parent(ModuleId::lemma("1.1")) == ModuleId::proposition("1"));
  CHECK(proof.scope_parent(ModuleId::proposition("1")) == ModuleId::theorem());

  const std::string fwd =
      "<THEOREM_STATEMENT>\nStatement :\nt\n</THEOREM_STATEMENT>\n"
      "<PROPOSITION_STATEMENT id=\"1\">\nStatement :\np1\n</PROPOSITION_STATEMENT>\n"
      "<PROPOSITION_PROOF id=\"1\">\nq\n</PROPOSITION_PROOF>\n"
      "<LEMMA_STATEMENT id=\"2.1\">\nStatement :\nl\n</LEMMA_STATEMENT>\n"
      "<LEMMA_PROOF id=\"2.1\">\nq\n</LEMMA_PROOF>\n"
      "<PROPOSITION_STATEMENT id=\"2\">\nStatement :\np2\n</PROPOSITION_STATEMENT>\n"
      "<PROPOSITION_PROOF id=\"2\">\nq\n</PROPOSITION_PROOF>\n"
      "<THEOREM_PROOF>\nq\n</THEOREM_PROOF>";
  CHECK(code_of([&] { to_proof(parse_pf_document(fwd), {}); }) == Errc::ForwardReference);

  const std::string orphan =
      "<THEOREM_STATEMENT id=\"1\">\nStatement :\nt\n</THEOREM_STATEMENT>\n"
      "<THEOREM_PROOF id=\"1\">\nq\n</THEOREM_PROOF>\n"
      "<THEOREM_PROOF id=\"2\">\nq\n</THEOREM_PROOF>";
  CHECK(code_of([&] { to_proof(parse_pf_document(orphan), {TheoremMode::MultiTheorem}); }) == Errc::OrphanProof);

  const std::string missing =
      "<THEOREM_STATEMENT>\nStatement :\nt\n</THEOREM_STATEMENT>\n"
      "<PROPOSITION_STATEMENT id=\"1\">\nStatement :\np1\n</PROPOSITION_STATEMENT>\n"
      "<THEOREM_PROOF>\nq\n</THEOREM_PROOF>";
  CHECK(code_of([&] { to_proof(parse_pf_document(missing), {}); }) == Errc::MissingProof);

  CHECK(code_of([] {
          to_proof(parse_pf_document("<PROPOSITION_STATEMENT id=\"1\">\nStatement :\np\n</PROPOSITION_STATEMENT>\n"
                                     "<PROPOSITION_PROOF id=\"1\">\nq\n</PROPOSITION_PROOF>"),
                   {});
        }) == Errc::MissingTheorem);
}

TEST_CASE("mention pruning keeps only cited targets") {
  const std::string doc =
      "<THEOREM_STATEMENT>\nStatement :\nt\n</THEOREM_STATEMENT>\n"
      "<PROPOSITION_STATEMENT id=\"1\">\nStatement :\np1\n</PROPOSITION_STATEMENT>\n"
      "<PROPOSITION_PROOF id=\"1\">\nq\n</PROPOSITION_PROOF>\n"
      "<PROPOSITION_STATEMENT id=\"2\">\nStatement :\np2\n</PROPOSITION_STATEMENT>\n"
      "<PROPOSITION_PROOF id=\"2\">\nDirect.\n</PROPOSITION_PROOF>\n"
      "<THEOREM_PROOF>\nBy Prop. 2.\n</THEOREM_PROOF>";
  auto full = to_proof(parse_pf_document(doc), {});
  CHECK(full.dependencies(ModuleId::theorem()).size() == 2);
  CHECK(full.dependencies(ModuleId::proposition("2")).size() == 1);
  auto pruned = to_proof(parse_pf_document(doc), {TheoremMode::SingleTheorem, true});
  CHECK(pruned.dependencies(ModuleId::theorem()) == std::vector<ModuleId>{ModuleId::proposition("2")});
  CHECK(pruned.dependencies(ModuleId::proposition("2")).empty());
}

TEST_CASE("scan_mentions") {
  auto m = scan_mentions("By Lemma 2.1, Props. 3 and 4, and Theorem 2 we get it; Lemma 5 is ignored.");
  CHECK(m == std::set<ModuleId>{ModuleId::lemma("2.1"), ModuleId::proposition("3"), ModuleId::proposition("4"),
                                ModuleId::theorem("2")});
}

TEST_CASE("serialize round trip on the template") {
  auto text = template_doc();
  auto proof = to_proof(parse_pf_document(text), {});
  auto out = serialize_proof(proof);
  CHECK(parse_pf_document(out).blocks == parse_pf_document(text).blocks);
  CHECK(to_proof(parse_pf_document(out), {}) == proof);
}

TEST_CASE("serialize round trip on random proofs") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto mode = coin(rng) ? TheoremMode::SingleTheorem : TheoremMode::MultiTheorem;
    auto proof = assemble_structured_proof(random_structured_modules(rng, mode), {mode});
    auto text = serialize_proof(proof);
    auto back = to_proof(parse_pf_document(text), {mode});
    CHECK(back == proof);
    CHECK(serialize_proof(back) == text);
  }
}

TEST_CASE("serializer rejects delimiter-like text") {
  auto bad = [](std::string premises, std::string proof) {
    std::vector<ProofModule> mods{{ModuleId::theorem(), std::move(premises), "c", std::move(proof)}};
    return code_of([&] { serialize_proof(assemble_structured_proof(mods, {})); });
  };
  CHECK(bad("<LEMMA_STATEMENT id=\"1.1\">", "p") == Errc::UnserializableText);
  CHECK(bad("x", "done\n</THEOREM_PROOF>") == Errc::UnserializableText);
  CHECK(bad("a\nStatement :\nb", "p") == Errc::UnserializableText);
  std::vector<ProofModule> ok{{ModuleId::theorem(), "uses <LEMMA_ inline", "c", "fine"}};
  CHECK_NOTHROW(serialize_proof(assemble_structured_proof(ok, {})));
}

TEST_CASE("split and render statements") {
  auto parts = split_statement("Assumptions / Conditions / Definitions.\n- a\nStatement :\nb");
  CHECK(parts.premises == "- a");
  CHECK(parts.conclusion == "b");
  auto again = split_statement(render_statement(parts.premises, parts.conclusion));
  CHECK(again.premises == parts.premises);
  CHECK(again.conclusion == parts.conclusion);
}

TEST_CASE("parse_block_verdict") {
  auto ok = parse_block_verdict("Looks fine.\n```json\n{\"verdict\":\"CORRECT\",\"error_description\":null}\n```");
  CHECK(ok.correct);
  CHECK_FALSE(ok.error_description.has_value());
  auto bad = parse_block_verdict("{\"verdict\":\"INCORRECT\",\"error_description\":\"step 2 unjustified\"}");
  CHECK_FALSE(bad.correct);
  CHECK(bad.error_description == "step 2 unjustified");
  CHECK(code_of([] { parse_block_verdict("```json\n{\"verdict\":\"CORRECT\"}\n```\n```\nnot json\n```"); }) ==
        Errc::NoJsonBlock);
  CHECK(code_of([] { parse_block_verdict("{\"verdict\":\"correct\"}"); }) == Errc::UnknownVerdictString);
  CHECK(code_of([] { parse_block_verdict("{\"verdict\":\"INCORRECT\",\"error_description\":null}"); }) ==
        Errc::MissingDescription);
  auto last = parse_block_verdict(
      "```json\n{\"verdict\":\"INCORRECT\",\"error_description\":\"x\"}\n```\nthen\n```json\n{\"verdict\":\"CORRECT\"}\n```");
  CHECK(last.correct);
  auto latex = parse_block_verdict("{\"verdict\":\"INCORRECT\",\"error_description\":\"uses \\mathbb{R} wrongly\"}");
  CHECK(latex.error_description == "uses \\mathbb{R} wrongly");
}

TEST_CASE("parse_faithfulness_verdict") {
  CHECK(parse_faithfulness_verdict("{\"verdict\":\"FAITHFUL\",\"error_description\":null}").faithful);
  auto f = parse_faithfulness_verdict("{\"verdict\":\"UNFAITHFUL\",\"error_description\":\"drops a case\"}");
  CHECK_FALSE(f.faithful);
  CHECK(code_of([] { parse_faithfulness_verdict("{\"verdict\":\"UNFAITHFUL\"}"); }) == Errc::MissingDescription);
}

TEST_CASE("parse_step_verdict_line") {
  CHECK(parse_step_verdict_line("Reasoning: ...\nVerdict: yes, no, yes", 3) == std::vector<bool>{true, false, true});
  CHECK(parse_step_verdict_line("verdict: YES,no\nVerdict: no , no", 2) == std::vector<bool>{false, false});
  CHECK(code_of([] { parse_step_verdict_line("Verdict: yes, no", 3); }) == Errc::LengthMismatch);
  CHECK(code_of([] { parse_step_verdict_line("Verdict: yes, maybe", 2); }) == Errc::UnknownToken);
  CHECK(code_of([] { parse_step_verdict_line("all good", 2); }) == Errc::NoVerdictLine);
}

TEST_CASE("parse_calibration") {
  const std::string base =
      "<calibration>\n<flag_audit>\n</flag_audit>\n<additional_errors>\n</additional_errors>\n"
      "<step_verdicts>yes,no</step_verdicts>\n<first_incorrect_step>FIS</first_incorrect_step>\n</calibration>";
  auto with = [&](const std::string& fis) {
    auto s = base;
    s.replace(s.find("FIS"), 3, fis);
    return s;
  };
  auto ok = parse_calibration(with("1"), 2);
  CHECK(ok.step_verdicts == std::vector<bool>{true, false});
  CHECK(ok.first_incorrect_step == 1);
  CHECK(ok.flag_audits.empty());
  CHECK(ok.additional_errors.empty());
  CHECK(ok.warnings.empty());

  auto repaired = parse_calibration(with("0"), 2);
  CHECK(repaired.first_incorrect_step == 1);
  CHECK(repaired.warnings.size() == 1);

  CHECK(code_of([] { parse_calibration("no block here", 2); }) == Errc::NoCalibrationBlock);
}

TEST_CASE("parse_error_list") {
  auto two = parse_error_list(
      "<errors>\n<error>\n<location>Theorem 4.2</location>\n<description>a</description>\n</error>\n"
      "<error>\n<location>  Lemma 5.1 </location>\n<description>b</description>\n</error>\n</errors>");
  REQUIRE(two.size() == 2);
  CHECK(two[0].location == "Theorem 4.2");
  CHECK(parse_error_list("<errors>\n</errors>").empty());
  CHECK(code_of([] { parse_error_list("<errors>\n<error>\n<description>b</description>\n</error>\n</errors>"); }) ==
        Errc::MalformedErrorEntry);
  CHECK(code_of([] { parse_error_list("nothing"); }) == Errc::NoErrorsBlock);
  auto rendered = render_error_list(two);
  CHECK(parse_error_list(rendered) == two);
}

TEST_CASE("parsers are total on random input") {
  Rng rng(22);
  static const std::vector<std::string> kPieces = {
      "<THEOREM_STATEMENT>", "</THEOREM_STATEMENT>", "<LEMMA_PROOF id=\"1.1\">", "</LEMMA_PROOF>", "\n", "x",
      "Statement :",         "{\"verdict\":",        "\"CORRECT\"}",           "```",            "<errors>",
      "</errors>",           "<error>",              "<location>",             "Verdict: yes",   "<calibration>",
      "</calibration>",      "<step_verdicts>",      "no,",                    "\xff",           "id=\""};
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    for (std::size_t i = uniform(rng, 0, 30); i > 0; --i) s += pick(rng, kPieces);
    auto guard = [](auto&& f) {
      try {
        f();
      } catch (const Error&) {
      }
    };
    guard([&] { to_proof(parse_pf_document(s), {}); });
    guard([&] { parse_block_verdict(s); });
    guard([&] { parse_faithfulness_verdict(s); });
    guard([&] { parse_step_verdict_line(s, 2); });
    guard([&] { parse_calibration(s, 2); });
    guard([&] { parse_error_list(s); });
  }
  CHECK(true);
}
