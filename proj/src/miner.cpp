#include "pfv/miner.hpp"

#include <algorithm>
#include <regex>
#include <thread>

#include "httplib.h"
#include "pfv/error.hpp"
#include "pfv/pipeline.hpp"
#include "pfv/prompts.hpp"
#include "pfv/util.hpp"

namespace pfv {

bool regex_filter(std::string_view revision_comment) {
  static const std::regex correction("correct|errat|error|fix|mistake|bug|flaw|wrong|revised|amendment",
                                     std::regex::icase);
  static const std::regex result("lemma|theorem|proposition", std::regex::icase);
  if (trim(revision_comment).empty()) return false;
  std::string s(revision_comment);
  return std::regex_search(s, correction) && std::regex_search(s, result);
}

bool regex_filter(const ArxivRecord& record) {
  return record.revision_comment && regex_filter(*record.revision_comment);
}

std::string_view label_name(TriageLabel label) noexcept {
  switch (label) {
    case TriageLabel::Major: return "major";
    case TriageLabel::Minor: return "minor";
    case TriageLabel::None: return "none";
  }
  return "none";
}

TriageLabel parse_triage_label(std::string_view reply) {
  auto word = single_word_answer(reply);
  if (word == "major") return TriageLabel::Major;
  if (word == "minor") return TriageLabel::Minor;
  if (word == "none") return TriageLabel::None;
  throw Error(Errc::UnparseableLabel, "expected major, minor or none; got '" + std::string(trim(reply)) + "'");
}

TriageLabel triage(const ArxivRecord& record, Gateway& gateway, std::vector<std::string>* warnings) {
  ChatRequest req;
  req.user_prompt =
      prompts::render(prompts::get(prompts::kTriage), {{"comments", record.revision_comment.value_or("")}});
  std::string last;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      return parse_triage_label(gateway.complete(req, {stage::kTriage, 0}).text);
    } catch (const Error& e) {
      if (e.code() != Errc::UnparseableLabel) throw;
      last = e.what();
    }
  }
  if (warnings) warnings->push_back(record.arxiv_id + ": " + last + "; labelled none");
  return TriageLabel::None;
}

namespace {

std::string xml_unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    static const std::pair<std::string_view, char> entities[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
    bool done = false;
    for (const auto& [name, ch] : entities) {
      if (s.substr(i, name.size()) == name) {
        out += ch;
        i += name.size() - 1;
        done = true;
        break;
      }
    }
    if (!done) out += '&';
  }
  return out;
}

std::string collapse_ws(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

std::optional<std::string> element(const std::string& entry, const std::string& tag) {
  std::regex re("<" + tag + R"((?:\s[^>]*)?>([\s\S]*?)</)" + tag + ">");
  std::smatch m;
  if (!std::regex_search(entry, m, re)) return std::nullopt;
  return collapse_ws(xml_unescape(m[1].str()));
}

}  // namespace

std::vector<ArxivRecord> parse_atom_feed(std::string_view xml) {
  static const std::regex entry_re(R"(<entry>([\s\S]*?)</entry>)");
  static const std::regex id_re(R"(abs/(.+?)v(\d+)$)");
  static const std::regex cat_re(R"re(<arxiv:primary_category[^>]*term="([^"]+)")re");
  std::vector<ArxivRecord> out;
  std::string text(xml);
  for (std::sregex_iterator it(text.begin(), text.end(), entry_re), end; it != end; ++it) {
    const std::string entry = (*it)[1].str();
    ArxivRecord r;
    auto id = element(entry, "id").value_or("");
    std::smatch m;
    if (std::regex_search(id, m, id_re)) {
      r.arxiv_id = m[1].str();
      r.version = std::stoi(m[2].str());
    } else {
      r.arxiv_id = id.substr(id.rfind('/') == std::string::npos ? 0 : id.rfind('/') + 1);
    }
    r.published = element(entry, "published").value_or("").substr(0, 10);
    r.title = element(entry, "title").value_or("");
    r.abstract = element(entry, "summary").value_or("");
    if (auto c = element(entry, "arxiv:comment"); c && !c->empty()) r.revision_comment = *c;
    if (std::regex_search(entry, m, cat_re)) r.primary_category = m[1].str();
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

LiveArxivClient::LiveArxivClient() : LiveArxivClient(Options{}) {}

LiveArxivClient::LiveArxivClient(Options options) : options_(std::move(options)) {
  if (!options_.sleeper) options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string LiveArxivClient::query_path(const DateWindow& window, std::size_t start, std::size_t max_results) {
  auto compact = [](std::string d) {
    d.erase(std::remove(d.begin(), d.end(), '-'), d.end());
    return d;
  };
  return "/api/query?search_query=cat:math.*+AND+submittedDate:%5B" + compact(window.from) + "0000+TO+" +
         compact(window.to) + "2359%5D&start=" + std::to_string(start) +
         "&max_results=" + std::to_string(max_results) + "&sortBy=submittedDate&sortOrder=ascending";
}

std::vector<ArxivRecord> LiveArxivClient::fetch_page(const DateWindow& window, std::size_t start,
                                                     std::size_t max_results) {
  if (!first_) options_.sleeper(options_.page_delay);
  first_ = false;
  httplib::Client client(options_.base_url);
  client.set_read_timeout(60, 0);
  client.set_follow_location(true);
  std::string last;
  for (std::size_t attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt) options_.sleeper(options_.page_delay * (1 << attempt));
    auto res = client.Get(query_path(window, start, max_results));
    if (!res) {
      last = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return parse_atom_feed(res->body);
    last = "HTTP " + std::to_string(res->status);
    if (res->status != 429 && res->status < 500) break;
  }
  throw Error(Errc::ApiUnavailable, "arXiv API: " + last);
}

RecordedArxivClient::RecordedArxivClient(std::filesystem::path fixture) : fixture_(std::move(fixture)) {}

std::vector<ArxivRecord> RecordedArxivClient::fetch_page(const DateWindow& window, std::size_t start,
                                                         std::size_t max_results) {
  if (!records_) {
    std::error_code ec;
    if (!std::filesystem::exists(fixture_, ec))
      throw Error(Errc::ApiUnavailable, "recorded arXiv fixture " + fixture_.string() + " not found");
    std::vector<std::filesystem::path> pages;
    if (std::filesystem::is_directory(fixture_)) {
      for (const auto& e : std::filesystem::directory_iterator(fixture_))
        if (e.path().extension() == ".xml") pages.push_back(e.path());
      std::sort(pages.begin(), pages.end());
    } else {
      pages.push_back(fixture_);
    }
    std::vector<ArxivRecord> all;
    for (const auto& p : pages)
      for (auto& r : parse_atom_feed(read_file(p))) all.push_back(std::move(r));
    records_ = std::move(all);
  }
  std::vector<ArxivRecord> in_window;
  for (const auto& r : *records_)
    if (r.published >= window.from && r.published <= window.to) in_window.push_back(r);
  if (start >= in_window.size()) return {};
  auto last = std::min(in_window.size(), start + max_results);
  return {in_window.begin() + static_cast<std::ptrdiff_t>(start), in_window.begin() + static_cast<std::ptrdiff_t>(last)};
}

// ---------------------------------------------------------------------------

HarvestResult harvest(const DateWindow& window, ArxivClient& client, Gateway& gateway, const HarvestOptions& options) {
  if (window.from > window.to) throw Error(Errc::ConfigError, "date window starts after it ends");
  if (options.page_size == 0) throw Error(Errc::ConfigError, "page size must be positive");
  HarvestResult out;
  std::size_t start = 0;
  while (!options.max_records || start < *options.max_records) {
    auto page = client.fetch_page(window, start, options.page_size);
    if (page.empty()) break;
    out.log.push_back("page at " + std::to_string(start) + ": " + std::to_string(page.size()) + " records");
    start += page.size();
    for (auto& record : page) {
      if (options.max_records && out.funnel.retrieved >= *options.max_records) break;
      ++out.funnel.retrieved;
      if (!regex_filter(record)) continue;
      ++out.funnel.regex_passed;
      auto label = triage(record, gateway, &out.log);
      out.log.push_back(record.arxiv_id + "v" + std::to_string(record.version) + ": " + std::string(label_name(label)));
      if (label == TriageLabel::None) continue;
      ++out.funnel.retained;
      out.retained.push_back({std::move(record), label});
    }
    if (page.size() < options.page_size) break;
  }
  return out;
}

nlohmann::json worklist_entry(const Candidate& candidate) {
  const auto& r = candidate.record;
  const int before = std::max(1, r.version - 1);
  const auto versioned = r.arxiv_id + "v" + std::to_string(before);
  return {{"id", r.arxiv_id},
          {"version", r.version},
          {"corrected_from_version", before},
          {"primary_category", r.primary_category},
          {"published", r.published},
          {"title", r.title},
          {"revision_comment", r.revision_comment.value_or("")},
          {"triage", std::string(label_name(candidate.label))},
          {"latex_source", ""},
          {"source_url", "https://arxiv.org/e-print/" + versioned},
          {"pdf_url", "https://arxiv.org/pdf/" + versioned},
          {"checklist",
           {"download the source of " + versioned + " and consolidate it into a single LaTeX file",
            "confirm the license permits redistribution",
            "confirm the revision fixes a genuine mathematical error",
            "fill error_locations from the revision comment using the labels of the rendered PDF"}}};
}

std::string worklist_jsonl(const HarvestResult& result) {
  std::string out;
  for (const auto& c : result.retained) out += worklist_entry(c).dump() + "\n";
  return out;
}

std::string pdf_to_latex(const std::string& pdf_bytes, Gateway& gateway, const std::string& filename) {
  ChatRequest req;
  req.user_prompt = prompts::get(prompts::kPdfToLatex);
  req.attachments.push_back({"application/pdf", filename, pdf_bytes});
  return gateway.complete(std::move(req), {stage::kPdfToLatex, 0}).text;
}

}  // namespace pfv
