#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "redstore/experiment.hpp"
#include "redstore/rng.hpp"
#include "test_support.hpp"

using namespace redstore;
using redstore::testing::close;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

TrialRecord make_record(std::size_t trial, const std::string& model, const std::string& attack,
                        bool correct, bool redirected) {
  TrialRecord r;
  r.trial = trial;
  r.seed = derive_seed(1, trial);
  r.model = model;
  r.attack = attack;
  r.command_category = "pants";
  r.true_category = "sweater";
  r.target_category = attack == "none" ? "" : "pants";
  r.terminal_state = "purchased";
  r.purchased_id = correct ? 1 : 0;
  r.purchased_category = correct ? "pants" : "sweater";
  r.correct = correct;
  r.redirected_to_adversarial = redirected;
  r.attack_iterations = attack == "none" ? 0 : 40;
  return r;
}

}  // namespace

TEST_CASE("normal quantile hits the standard values") {
  CHECK(close(normal_quantile(0.975), 1.959964, 1e-6));
  CHECK(close(normal_quantile(0.5), 0.0, 1e-12));
  CHECK(close(normal_quantile(0.025), -normal_quantile(0.975), 1e-9));
  CHECK(close(normal_quantile(0.995), 2.5758293, 1e-6));
  CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
  CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
}

TEST_CASE("wilson interval reproduces the 90.2 +- 2.3 row") {
  Interval ci = wilson_interval(568, 630, 0.95);
  CHECK(close(ci.halfwidth(), 0.02331665286841754, 1e-9));
  CHECK(std::abs(ci.halfwidth() - 0.023) < 0.001);  // within 0.1 percentage points
  const double phat = 568.0 / 630.0;
  CHECK(ci.low <= phat);
  CHECK(ci.high >= phat);
  CHECK(ci.low >= 0.0);
  CHECK(ci.high <= 1.0);
}

TEST_CASE("wilson boundary cases are exact") {
  for (std::size_t n : {1, 10, 630}) {
    CHECK(wilson_interval(0, n, 0.95).low == 0.0);
    CHECK(wilson_interval(n, n, 0.95).high == 1.0);
    CHECK(wilson_interval(0, n, 0.95).high > 0.0);
    CHECK(wilson_interval(n, n, 0.95).low < 1.0);
  }
  CHECK_THROWS_AS(wilson_interval(5, 4, 0.95), DomainError);
  CHECK_THROWS_AS(wilson_interval(0, 0, 0.95), DomainError);
  CHECK_THROWS_AS(wilson_interval(1, 2, 1.0), DomainError);
}

TEST_CASE("sign test p-values") {
  CHECK(close(sign_test_pvalue(3, 3), 1.0 / 8.0, 1e-12));
  CHECK(close(sign_test_pvalue(0, 5), 1.0, 1e-12));
  CHECK(sign_test_pvalue(90, 100) < 1e-15);
  CHECK_THROWS_AS(sign_test_pvalue(4, 3), DomainError);
}

TEST_CASE("compute_asr against a hand-counted record set") {
  std::vector<TrialRecord> records;
  for (std::size_t i = 0; i < 7; ++i)
    records.push_back(make_record(i, "standard", "bim", i < 4, i >= 4));
  AsrRow row = compute_asr(records);
  CHECK(row.n == 7);
  CHECK(row.correct_rate == 4.0 / 7.0);
  CHECK(close(row.asr, 3.0 / 7.0, 1e-15));
  CHECK(row.redirected_rate == 3.0 / 7.0);
  CHECK(row.asr + row.correct_rate == 1.0);
  CHECK(row.wilson_low <= row.correct_rate);
  CHECK(row.wilson_high >= row.correct_rate);
}

TEST_CASE("asr and correct rate are exact complements for every count") {
  for (std::size_t n = 1; n <= 50; ++n)
    for (std::size_t c = 0; c <= n; ++c) {
      std::vector<TrialRecord> records;
      for (std::size_t i = 0; i < n; ++i)
        records.push_back(make_record(i, "standard", "pgd", i < c, false));
      AsrRow row = compute_asr(records);
      CHECK(row.asr + row.correct_rate == 1.0);
    }
}

TEST_CASE("correct rate 0.474 yields asr 0.526") {
  std::vector<TrialRecord> records;
  for (std::size_t i = 0; i < 1000; ++i)
    records.push_back(make_record(i, "standard", "bim", i < 474, false));
  AsrRow row = compute_asr(records);
  CHECK(close(row.asr, 0.526, 1e-12));
  CHECK(format_percent(row.correct_rate) == "47.4");
  CHECK(format_percent(row.asr) == "52.6");
}

TEST_CASE("compute_asr rejects empty and mixed conditions") {
  CHECK_THROWS_AS(compute_asr({}), DomainError);
  std::vector<TrialRecord> mixed = {make_record(0, "standard", "bim", true, false),
                                    make_record(1, "robust", "bim", true, false)};
  CHECK_THROWS_AS(compute_asr(mixed), DomainError);
}

TEST_CASE("percent formatting rounds half away from zero to one decimal") {
  CHECK(format_percent(0.9016) == "90.2");
  CHECK(format_percent(0.90250) == "90.3");
  CHECK(format_percent(0.0) == "0.0");
  CHECK(format_percent(1.0) == "100.0");
  CHECK(format_percent(0.526) == "52.6");
}

TEST_CASE("trial csv round trips") {
  std::vector<TrialRecord> records;
  for (std::size_t i = 0; i < 9; ++i)
    records.push_back(make_record(i, "standard", i % 2 ? "bim" : "none", i % 3 != 0, i % 4 == 0));
  records[2].purchased_id.reset();
  records[2].purchased_category.clear();
  records[2].terminal_state = "budget_exhausted";
  records[2].correct = false;

  const std::string path = temp_path("redstore_trials.csv");
  write_trial_csv(path, records);
  std::vector<TrialRecord> back = read_trial_csv(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].trial == records[i].trial);
    CHECK(back[i].seed == records[i].seed);
    CHECK(back[i].model == records[i].model);
    CHECK(back[i].attack == records[i].attack);
    CHECK(back[i].command_category == records[i].command_category);
    CHECK(back[i].purchased_id == records[i].purchased_id);
    CHECK(back[i].correct == records[i].correct);
    CHECK(back[i].redirected_to_adversarial == records[i].redirected_to_adversarial);
    CHECK(back[i].attack_iterations == records[i].attack_iterations);
  }
  std::remove(path.c_str());
}

TEST_CASE("report: exact csv shape and byte-identical regeneration") {
  std::vector<TrialRecord> records;
  for (std::size_t i = 0; i < 630; ++i)
    records.push_back(make_record(i, "standard", "none", i < 568, false));
  for (std::size_t i = 0; i < 630; ++i)
    records.push_back(make_record(i, "standard", "bim", i < 298, i >= 500));

  std::vector<AsrRow> rows = aggregate_report(records);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].attack == "none");  // canonical ordering
  CHECK(rows[1].attack == "bim");

  const std::string p1 = temp_path("redstore_report1.csv");
  const std::string p2 = temp_path("redstore_report2.csv");
  emit_report(p1, rows, ReportFormat::csv);
  emit_report(p2, rows, ReportFormat::csv);
  const std::string text = slurp(p1);
  CHECK(text == slurp(p2));

  std::istringstream lines(text);
  std::string header, clean_line;
  std::getline(lines, header);
  CHECK(header == "model,attack,n,correct_rate,asr,ci_low,ci_high,redirected_rate");
  std::getline(lines, clean_line);
  CHECK(clean_line.rfind("standard,none,630,90.2,9.8,", 0) == 0);

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("report: markdown grid has a row per attack and a column per model") {
  std::vector<TrialRecord> records;
  for (const std::string& model : {"standard", "robust"})
    for (const std::string& attack : {"none", "bim", "pgd", "spectral"})
      for (std::size_t i = 0; i < 50; ++i)
        records.push_back(make_record(i, model, attack, i % 2 == 0, false));
  std::vector<AsrRow> rows = aggregate_report(records);
  const std::string path = temp_path("redstore_report.md");
  emit_report(path, rows, ReportFormat::markdown);
  const std::string text = slurp(path);

  CHECK(text.find("| Method | robust | standard |") == 0);
  CHECK(text.find("| Clean Baseline |") != std::string::npos);
  CHECK(text.find("| BIM |") != std::string::npos);
  CHECK(text.find("| PGD |") != std::string::npos);
  CHECK(text.find("| Spectral Ensemble |") != std::string::npos);
  CHECK(text.find("(ASR ") != std::string::npos);
  std::remove(path.c_str());

  CHECK_THROWS_AS(emit_report(temp_path("x.csv"), {}, ReportFormat::csv), DomainError);
}

TEST_CASE("per-trial seed derivation has no collisions up to 10^4") {
  for (std::uint64_t base : {0ULL, 1ULL, 0xDEADBEEFULL}) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(base, i));
    CHECK(seen.size() == 10000);
  }
}
