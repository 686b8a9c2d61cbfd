#include "doctest.h"
#include "gen.hpp"

#include "pfv/error.hpp"
#include "pfv/metrics.hpp"

using namespace pfv;
using namespace pfv::testing;

namespace {

using Pred = LabeledPrediction<std::size_t>;

}  // namespace

TEST_CASE("single perfect item") {
  auto s = summarize(std::vector<Pred>{{"a", {1}, {1}}});
  CHECK(s.precision().value() == 1.0);
  CHECK(s.recall().value() == 1.0);
  CHECK(s.coverage().value() == 1.0);
  CHECK(s.mean_false_errors().value() == 0.0);
}

TEST_CASE("hand-enumerated item") {
  auto s = summarize(std::vector<Pred>{{"a", {1, 3}, {3, 4}}});
  CHECK(s.tp == 1);
  CHECK(s.fp == 1);
  CHECK(s.fn == 1);
  CHECK(s.precision().value() == 0.5);
  CHECK(s.recall().value() == 0.5);
  CHECK(s.coverage().value() == 0.0);
  CHECK(s.mean_false_errors().value() == 1.0);
  CHECK(s.proof_tp == 1);
}

TEST_CASE("degenerate denominators are undefined") {
  auto s = summarize(std::vector<Pred>{{"a", {}, {}}});
  CHECK_FALSE(s.precision().value().has_value());
  CHECK_FALSE(s.recall().value().has_value());
  CHECK_FALSE(s.coverage().value().has_value());
  CHECK(s.precision().str() == "n/a");
  CHECK(s.proof_tn == 1);
  CHECK(to_json(s)["precision"].is_null());
  CHECK(summarize(std::vector<Pred>{}).items == 0);
}

TEST_CASE("duplicate ids are rejected") {
  CHECK_THROWS_AS(summarize(std::vector<Pred>{{"a", {}, {}}, {"a", {1}, {}}}), Error);
}

TEST_CASE("summarize matches the brute-force oracle") {
  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    auto data = random_dataset(rng);
    auto s = summarize(data);
    CHECK(matches_oracle(s, oracle_metrics(data)));
    std::size_t truth = 0, pred = 0;
    for (const auto& d : data) truth += d.truth.size(), pred += d.predicted.size();
    CHECK(s.tp + s.fn == truth);
    CHECK(s.tp + s.fp == pred);
    CHECK(s.proof_tp + s.proof_fp + s.proof_fn + s.proof_tn == data.size());
  }
}

TEST_CASE("summarize is permutation-invariant") {
  Rng rng(52);
  for (int trial = 0; trial < 50; ++trial) {
    auto data = random_dataset(rng);
    auto shuffled = data;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(summarize(data) == summarize(shuffled));
  }
}

TEST_CASE("k_sweep") {
  std::vector<RolloutPredictions<std::size_t>> same{{"a", {2}, {{2}, {2}, {2}, {2}}}};
  auto rows = k_sweep(same, {1, 2, 4});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].second == rows[2].second);
  CHECK_THROWS_AS(k_sweep(same, {8}), Error);
  try {
    k_sweep(same, {8});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientRollouts);
  }
  CHECK_THROWS_AS(k_sweep(same, {0}), Error);
}

TEST_CASE("nested rollouts give monotone sweeps") {
  Rng rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<RolloutPredictions<std::size_t>> items;
    for (std::size_t i = 0, n = uniform(rng, 1, 20); i < n; ++i) {
      RolloutPredictions<std::size_t> it{"i" + std::to_string(i), {}, {}};
      for (std::size_t s = 0; s < 8; ++s)
        if (coin(rng, 0.2)) it.truth.insert(s);
      for (int r = 0; r < 8; ++r) {
        std::set<std::size_t> flagged;
        for (std::size_t s = 0; s < 8; ++s)
          if (coin(rng, 0.1)) flagged.insert(s);
        it.rollouts.push_back(flagged);
      }
      items.push_back(std::move(it));
    }
    auto rows = k_sweep(items, {1, 2, 4, 8});
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& a = rows[i - 1].second;
      const auto& b = rows[i].second;
      CHECK(b.tp >= a.tp);
      CHECK(b.fp >= a.fp);
      CHECK(b.fn <= a.fn);
      if (a.recall().value() && b.recall().value()) CHECK(*b.recall().value() >= *a.recall().value());
    }
  }
}

TEST_CASE("csv output") {
  auto s = summarize(std::vector<Pred>{{"a", {1, 3}, {3, 4}}, {"b", {}, {}}});
  auto csv = sweep_csv({{1, s}});
  auto lines = split_lines(csv);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0] == kSweepCsvHeader);
  CHECK(lines[1].rfind("1,2,1,1,1,", 0) == 0);
  CHECK(csv_row(1, s).find("n/a") == std::string::npos);
  CHECK(Ratio{1, 3}.str() == "0.333333");
}
