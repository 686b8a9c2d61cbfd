#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfv/gateway.hpp"

namespace pfv {

struct ArxivRecord {
  std::string arxiv_id;  // without version suffix
  int version = 1;
  std::string primary_category;
  std::string published;  // YYYY-MM-DD
  std::string title;
  std::string abstract;
  std::optional<std::string> revision_comment;
};

/// Both case-insensitive regexes on the revision comment; empty comments fail.
bool regex_filter(std::string_view revision_comment);
bool regex_filter(const ArxivRecord& record);

enum class TriageLabel { Major, Minor, None };

std::string_view label_name(TriageLabel label) noexcept;

/// Single word major / minor / none, any case, surrounding punctuation ignored.
/// Throws UnparseableLabel.
TriageLabel parse_triage_label(std::string_view reply);

/// One classification call; an unparseable reply is retried once and then
/// counts as none (recorded in `warnings` when given).
TriageLabel triage(const ArxivRecord& record, Gateway& gateway, std::vector<std::string>* warnings = nullptr);

/// Inclusive publication-date window, YYYY-MM-DD.
struct DateWindow {
  std::string from;
  std::string to;
};

/// Entries of an arXiv API Atom feed.
std::vector<ArxivRecord> parse_atom_feed(std::string_view xml);

class ArxivClient {
 public:
  virtual ~ArxivClient() = default;
  /// Up to `max_results` records starting at `start`; empty when exhausted.
  /// Throws ApiUnavailable.
  virtual std::vector<ArxivRecord> fetch_page(const DateWindow& window, std::size_t start, std::size_t max_results) = 0;
};

/// Queries export.arxiv.org for math.* submissions in the window.
class LiveArxivClient final : public ArxivClient {
 public:
  struct Options {
    std::string base_url = "https://export.arxiv.org";
    std::chrono::milliseconds page_delay{3000};
    std::size_t max_retries = 3;
    std::function<void(std::chrono::milliseconds)> sleeper;
  };
  explicit LiveArxivClient(Options options);
  LiveArxivClient();
  std::vector<ArxivRecord> fetch_page(const DateWindow& window, std::size_t start, std::size_t max_results) override;

  static std::string query_path(const DateWindow& window, std::size_t start, std::size_t max_results);

 private:
  Options options_;
  bool first_ = true;
};

/// Replays saved Atom pages (a file, or every *.xml in a directory in name
/// order), filtered to the window and paged like the live API.
class RecordedArxivClient final : public ArxivClient {
 public:
  explicit RecordedArxivClient(std::filesystem::path fixture);
  std::vector<ArxivRecord> fetch_page(const DateWindow& window, std::size_t start, std::size_t max_results) override;

 private:
  std::filesystem::path fixture_;
  std::optional<std::vector<ArxivRecord>> records_;
};

struct Funnel {
  std::size_t retrieved = 0;
  std::size_t regex_passed = 0;
  std::size_t retained = 0;
};

struct Candidate {
  ArxivRecord record;
  TriageLabel label = TriageLabel::None;
};

struct HarvestResult {
  std::vector<Candidate> retained;
  Funnel funnel;
  std::vector<std::string> log;
};

struct HarvestOptions {
  std::size_t page_size = 100;
  std::optional<std::size_t> max_records;
};

HarvestResult harvest(const DateWindow& window, ArxivClient& client, Gateway& gateway,
                      const HarvestOptions& options = {});

/// One JSON object per retained paper: ingestion fields (latex_source left
/// empty) plus download URLs for the corrected-from version and manual checks.
nlohmann::json worklist_entry(const Candidate& candidate);
std::string worklist_jsonl(const HarvestResult& result);

/// Candidate LaTeX for a PDF-only paper; output fidelity is not checked.
std::string pdf_to_latex(const std::string& pdf_bytes, Gateway& gateway, const std::string& filename = "paper.pdf");

}  // namespace pfv
