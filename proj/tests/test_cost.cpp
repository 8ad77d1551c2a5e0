#include <doctest.h>

#include <random>

#include "guide/cost.hpp"
#include "guide/error.hpp"

using namespace guide;
using namespace guide::cost;

namespace {

// Oracle: dollars as a long double straight from the per-million price.
long double oracle_usd(long double in_tok, long double out_tok, long double in_price, long double out_price) {
  return in_tok * in_price / 1e6L + out_tok * out_price / 1e6L;
}

}  // namespace

TEST_CASE("text token estimate") {
  CHECK(estimate_text_tokens("") == 0);
  CHECK(estimate_text_tokens("0123456789") == 3);
  CHECK(estimate_text_tokens("abc") == 1);
  CHECK(estimate_text_tokens("abcde") == 1);
  CHECK(estimate_text_tokens("abcdef") == 2);
  CHECK(estimate_tokens_for_chars(220'800) == 55'200);
  CHECK(estimate_text_tokens(std::string(220'800, 'x')) == 55'200);
  CHECK(estimate_text_tokens("\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9") == 1);
}

TEST_CASE("image tokens") {
  CHECK(image_tokens(1920, 1080) == 2125);
  CHECK(30 * image_tokens(1920, 1080) == 63'750);
  CHECK_THROWS_AS(image_tokens(800, 600), Error);
  ImageTokenTable t;
  t.set_override(800, 600, 765);
  CHECK(t.tokens(800, 600) == 765);
}

TEST_CASE("cost_of single rows") {
  Price gpt51 = Price::from_usd(1.25, 10.00);
  CHECK(cost_of(127'200, 6'350, gpt51) == usd_to_pico(0.2225));
  CHECK(format_usd(cost_of(3'178, 1'650, gpt51), 4) == "0.0205");
  CHECK(format_usd(cost_of(3'178, 546, gpt51), 4) == "0.0094");
  CHECK(cost_of(0, 0, gpt51) == 0);

  std::vector<UsageRecord> none;
  CHECK(cost_of(none, default_prices()).total == 0);
  CHECK_THROWS_AS(cost_of({{"x", "mystery-model", 1, 1, 1}}, default_prices()), Error);
}

TEST_CASE("format_usd rounding") {
  CHECK(format_usd(usd_to_pico(0.00014), 5) == "0.00014");
  CHECK(format_usd(usd_to_pico(0.00005), 4) == "0.0001");
  CHECK(format_usd(usd_to_pico(0.00004999), 4) == "0.0000");
  CHECK(format_usd(usd_to_pico(114.39), 1) == "114.4");
  CHECK(format_usd(-usd_to_pico(1.5), 0) == "-2");
  CHECK(format_usd(usd_to_pico(3), 2) == "3.00");
}

TEST_CASE("annotation profile, typical regime") {
  auto records = annotation_profile(Regime::typical);
  REQUIRE(records.size() == 3);
  CHECK(records[0].calls == 15);
  CHECK(records[0].input_tokens == 63'750 + 55'200 + 8'250);
  CHECK(records[0].input_tokens == 127'200);
  CHECK(records[0].output_tokens == 6'350);
  CHECK(records[1].input_tokens == 3'178);
  CHECK(records[1].output_tokens == 546);
  CHECK(records[2].input_tokens == 3'178);
  CHECK(records[2].output_tokens == 1'650);

  auto report = cost_of(records, default_prices());
  CHECK(report.total_input_tokens() == 133'556);
  CHECK(report.total_output_tokens() == 8'546);
  CHECK(report.total_calls() == 17);
  long double oracle = oracle_usd(133'556, 8'546, 1.25L, 10.0L);
  CHECK(std::abs(to_usd(report.total) - static_cast<double>(oracle)) < 1e-12);
  CHECK(std::abs(to_usd(report.total) - 0.252) <= 0.0005);
  CHECK(std::abs(to_usd(report.rows[0].cost) - 0.2225) <= 0.00005);
  CHECK(std::abs(to_usd(report.rows[1].cost) - 0.0094) <= 0.00005);
  CHECK(std::abs(to_usd(report.rows[2].cost) - 0.0205) <= 0.00005);
}

TEST_CASE("annotation profile, complex regime") {
  auto report = cost_of(annotation_profile(Regime::complex), default_prices());
  CHECK(report.total_input_tokens() == 172'452);
  CHECK(report.total_output_tokens() == 8'546);
  CHECK(format_usd(report.total, 3) == "0.301");
}

TEST_CASE("retrieval profile reproduces the per-task table") {
  auto report = cost_of(retrieval_profile(), default_prices());
  REQUIRE(report.rows.size() == 4);
  const double printed[] = {0.0003, 0.00014, 0.0182, 0.00021};
  const long double oracle[] = {oracle_usd(109, 10, 2, 8), oracle_usd(268, 20, 0.4L, 1.6L),
                                oracle_usd(43'380, 525, 0.4L, 1.6L), oracle_usd(436, 25, 0.4L, 1.6L)};
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(to_usd(report.rows[i].cost) - static_cast<double>(oracle[i])) < 1e-12);
    CHECK(std::abs(to_usd(report.rows[i].cost) - printed[i]) <= 0.00005);
  }
  CHECK(report.total_calls() == 18);
  CHECK(std::abs(to_usd(report.total) - 0.0188) <= 0.0001);
  CHECK(report.total_input_tokens() == 44'193);
  CHECK(report.total_output_tokens() == 580);
}

TEST_CASE("benchmark totals") {
  auto r = benchmark_total(361, 299, 0.427, 0.0188, 0.252);
  CHECK(r.videos == 427);
  CHECK(std::abs(to_usd(r.retrieval) - 6.8) <= 0.05);
  CHECK(std::abs(to_usd(r.annotation) - 107.8) <= 0.3);
  CHECK(std::abs(to_usd(r.total) - 114.6) <= 0.3);
  CHECK(benchmark_total(361, 0, 0.427, 0.0188, 0.252).annotation == 0);
  CHECK(benchmark_total(10, 7, 1.0, 0.0188, 0.252).videos == 14);
  CHECK_THROWS_AS(benchmark_total(10, 11, 0.5, 0, 0), Error);
}

TEST_CASE("cost_of is linear") {
  std::mt19937 rng(5);
  auto prices = default_prices();
  const char* models[] = {"gpt-4.1", "gpt-4.1-mini", "gpt-5.1"};
  const char* stages[] = {"a", "b", "c"};
  for (int round = 0; round < 200; ++round) {
    std::vector<UsageRecord> a, b;
    for (int i = 0; i < 10; ++i) {
      UsageRecord r{stages[rng() % 3], models[rng() % 3], 1, static_cast<std::int64_t>(rng() % 100'000),
                    static_cast<std::int64_t>(rng() % 10'000)};
      (rng() % 2 ? a : b).push_back(r);
    }
    auto both = a;
    both.insert(both.end(), b.begin(), b.end());
    CHECK(cost_of(both, prices).total == cost_of(a, prices).total + cost_of(b, prices).total);
  }
}

TEST_CASE("ledger and record serialization") {
  Ledger ledger;
  UsageRecord r{"frame_pair_idm", "gpt-5.1", 1, 100, 10, "vid", 3, "failed", 3};
  ledger.append(r);
  CHECK(ledger.size() == 1);
  CHECK(usage_from_json(to_json(r)) == r);

  std::vector<UsageRecord> rs = {{"grounding_split", "m", 1, 0, 0, "v1", -1},
                                 {"frame_pair_idm", "m", 1, 0, 0, "v2", 0},
                                 {"frame_pair_idm", "m", 1, 0, 0, "v1", 1},
                                 {"frame_pair_idm", "m", 1, 0, 0, "v1", 0}};
  sort_records(rs);
  CHECK(rs[0].video_id == "v1");
  CHECK(rs[0].item == 0);
  CHECK(rs[1].item == 1);
  CHECK(rs[2].video_id == "v2");
  CHECK(rs[3].stage == "grounding_split");

  auto prices = prices_from_json(prices_to_json(default_prices()));
  CHECK(prices == default_prices());
}
