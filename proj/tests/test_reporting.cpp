#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "support/helpers.hpp"

using namespace mindbench;
using testsupport::record_with_totals;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mindbench-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Four Meow characters over three depression patients, 24 records each, with
// deterioration counts (7, 6, 12, 8).
struct Table1Fixture {
  EvalPlan plan;
  EvalDataset dataset;

  Table1Fixture() {
    std::vector<int> deteriorations = {7, 6, 12, 8};
    for (int c = 0; c < 4; ++c)
      plan.characters.push_back(
          testsupport::test_persona("char-" + std::to_string(c), "Meow"));
    for (int p = 0; p < 3; ++p)
      plan.patients.push_back(testsupport::depression_profile("pat-" + std::to_string(p)));
    plan.topics[DisorderType::Depression] = {"t0", "t1", "t2", "t3",
                                             "t4", "t5", "t6", "t7"};
    plan.created_at = "2026-01-01T00:00:00Z";

    for (int c = 0; c < 4; ++c) {
      int worsened = deteriorations[static_cast<std::size_t>(c)];
      int made = 0;
      for (int p = 0; p < 3; ++p) {
        for (int i = 0; i < 8; ++i) {
          int d = made < worsened ? 2 : 0;
          ++made;
          dataset.records.push_back(record_with_totals(
              "phq9", 10, 10 + d, "pat-" + std::to_string(p), "char-" + std::to_string(c), i));
        }
      }
    }
    dataset.plan_digest = "fixture";
    dataset.created_at = plan.created_at;
  }
};

}  // namespace

TEST_CASE("rates table reproduces the per-character row and its average") {
  Table1Fixture fx;
  auto index = ReportIndex::from_plan(fx.plan);
  auto rows = rate_rows(fx.dataset, index);
  REQUIRE(rows.size() == 1);
  const auto& row = rows[0];
  CHECK(row.style == "Meow");
  CHECK(row.disorder == "depression");
  REQUIRE(row.per_character.size() == 4);
  CHECK(format_percent(*row.per_character[0], 2) == "29.17");
  CHECK(format_percent(*row.per_character[1], 2) == "25.00");
  CHECK(format_percent(*row.per_character[2], 2) == "50.00");
  CHECK(format_percent(*row.per_character[3], 2) == "33.33");
  REQUIRE(row.average.has_value());
  CHECK(row.average->percent(2) == "34.38");

  auto table = render_rates_table(fx.dataset, index);
  CHECK(table.find("Meow,depression,29.17,25.00,50.00,33.33,34.38") != std::string::npos);
}

TEST_CASE("emit_report writes every artifact with stable columns") {
  Table1Fixture fx;
  auto dir = fresh_dir("report");
  emit_report(fx.dataset, fx.plan, dir);

  for (const char* name :
       {"report.json", "rates.csv", "cid.csv", "buckets.csv", "histograms.csv"})
    CHECK(std::filesystem::exists(dir / name));

  auto rates = read_file(dir / "rates.csv");
  CHECK(rates.find("style,disorder,char-0,char-1,char-2,char-3,average") == 0);
  CHECK(rates.find("Meow,depression,29.17,25.00,50.00,33.33,34.38") != std::string::npos);

  auto report = json::parse(read_file(dir / "report.json"));
  REQUIRE(report["groups"].size() == 4);
  CHECK(report["groups"][0]["deterioration_rate"]["count"] == 7);
  CHECK(report["groups"][0]["cid_rate"]["total"] == 24);

  // Bucket counts cover every record exactly once.
  auto buckets = read_file(dir / "buckets.csv");
  CHECK(buckets.find("style,disorder,bucket,count,total,percent") == 0);
  long long total_count = 0;
  auto rows = score_change_bucket_stats(fx.dataset.records, BucketSpec::default_for("phq9"));
  for (const auto& row : rows) total_count += row.stat.count;
  CHECK(total_count == static_cast<long long>(fx.dataset.records.size()));
}

TEST_CASE("cid rows cover the phq9 groups per style") {
  Table1Fixture fx;
  // push three records over the CID threshold for char-0
  for (int i = 0; i < 3; ++i)
    fx.dataset.records[static_cast<std::size_t>(i)].final_result.total = 16;  // delta 6
  auto index = ReportIndex::from_plan(fx.plan);
  auto rows = cid_rows(fx.dataset, index);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].style == "Meow");
  REQUIRE(rows[0].per_character[0].has_value());
  CHECK(rows[0].per_character[0]->count == 3);
  CHECK(format_percent(*rows[0].per_character[0], 1) == "12.5");
}

TEST_CASE("empty datasets cannot be reported") {
  Table1Fixture fx;
  EvalDataset empty;
  empty.plan_digest = "x";
  CHECK_THROWS_AS(emit_report(empty, fx.plan, fresh_dir("report-empty")), EmptyDataset);
}

TEST_CASE("mixed-disorder datasets group per instrument") {
  EvalPlan plan;
  plan.characters.push_back(testsupport::test_persona("char-0", "Meow"));
  plan.characters.push_back(testsupport::test_persona("char-1", "Roar"));
  auto dep = testsupport::depression_profile("pat-dep");
  auto del = testsupport::depression_profile("pat-del");
  del.disorder = DisorderType::Delusion;
  plan.patients = {dep, del};
  plan.topics[DisorderType::Depression] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  plan.topics[DisorderType::Delusion] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  plan.created_at = "2026-01-01T00:00:00Z";

  EvalDataset dataset;
  for (int i = 0; i < 4; ++i) {
    dataset.records.push_back(record_with_totals("phq9", 5, 5 + i, "pat-dep", "char-0", i));
    dataset.records.push_back(record_with_totals("pdi21", 3, 3 + (i % 2), "pat-del", "char-1", i));
  }
  dataset.plan_digest = "fixture";
  dataset.created_at = plan.created_at;

  auto dir = fresh_dir("report-mixed");
  emit_report(dataset, plan, dir);
  auto report = json::parse(read_file(dir / "report.json"));
  REQUIRE(report["groups"].size() == 2);
  CHECK(report["groups"][0]["questionnaire_id"] == "phq9");
  CHECK(report["groups"][1]["questionnaire_id"] == "pdi21");
  CHECK_FALSE(report["groups"][1].contains("cid_rate"));

  // cid.csv only carries the phq9 style row.
  auto cid = read_file(dir / "cid.csv");
  CHECK(cid.find("Meow") != std::string::npos);
  CHECK(cid.find("Roar,") == std::string::npos);
}

TEST_CASE("report numbers are a pure function of the persisted dataset") {
  Table1Fixture fx;
  auto dir = fresh_dir("report-pure");
  RunStore store(dir);
  store.write_plan_bytes(plan_to_canonical_json(fx.plan));
  store.write_dataset(fx.dataset);

  auto reread = store.read_dataset();
  CHECK(reread == fx.dataset);
  auto plan = store.read_plan();
  auto index = ReportIndex::from_plan(plan);
  CHECK(render_rates_table(reread, index) == render_rates_table(fx.dataset, index));
}
