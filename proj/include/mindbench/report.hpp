#pragma once

// Report emission: report.json plus plot-ready CSVs (rates, CID, buckets,
// histograms). Every number is a pure function of the dataset; nothing here
// talks to a backend.

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mindbench/metrics.hpp"
#include "mindbench/pipeline.hpp"

namespace mindbench {

namespace detail {

inline std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') quoted += "\"\"";
    else quoted.push_back(c);
  }
  quoted += "\"";
  return quoted;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string row;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) row.push_back(',');
    row += csv_field(fields[i]);
  }
  row.push_back('\n');
  return row;
}

}  // namespace detail

// Lookup tables derived from the plan: patient -> disorder, character ->
// style, plus stable orderings for rows and columns.
struct ReportIndex {
  std::map<std::string, DisorderType> patient_disorder;
  std::map<std::string, std::string> character_style;
  std::vector<std::string> character_order;
  std::vector<std::string> style_order;

  static ReportIndex from_plan(const EvalPlan& plan) {
    ReportIndex index;
    for (const auto& p : plan.patients) index.patient_disorder[p.id] = p.disorder;
    for (const auto& c : plan.characters) {
      index.character_order.push_back(c.id);
      index.character_style[c.id] = c.style_tag;
      bool seen = false;
      for (const auto& s : index.style_order) seen = seen || s == c.style_tag;
      if (!seen) index.style_order.push_back(c.style_tag);
    }
    return index;
  }
};

inline const std::vector<DisorderType>& disorder_order() {
  static const std::vector<DisorderType> order = {
      DisorderType::Depression, DisorderType::Delusion, DisorderType::Psychosis};
  return order;
}

struct GroupedRecords {
  GroupKey key;
  std::vector<CaseRecord> records;
};

// Records grouped per (character, style, disorder), in report order.
inline std::vector<GroupedRecords> group_records(const EvalDataset& dataset,
                                                 const ReportIndex& index) {
  std::vector<GroupedRecords> groups;
  for (auto disorder : disorder_order()) {
    for (const auto& character_id : index.character_order) {
      GroupedRecords g;
      g.key = GroupKey{character_id, index.character_style.at(character_id),
                       std::string(to_string(disorder))};
      for (const auto& r : dataset.records) {
        auto it = index.patient_disorder.find(r.patient_id);
        if (it == index.patient_disorder.end())
          throw ValidationError("record references unknown patient " + r.patient_id);
        if (r.character_id == character_id && it->second == disorder)
          g.records.push_back(r);
      }
      if (!g.records.empty()) groups.push_back(std::move(g));
    }
  }
  return groups;
}

// One Table-1-style row: per-character deterioration percentages for a
// (style, disorder) pair plus their average.
struct RateRow {
  std::string style;
  std::string disorder;
  std::vector<std::optional<RateStat>> per_character;  // aligned with character_order
  std::optional<Fraction> average;
};

inline std::vector<RateRow> rate_rows(const EvalDataset& dataset, const ReportIndex& index) {
  auto groups = group_records(dataset, index);
  std::vector<RateRow> rows;
  for (const auto& style : index.style_order) {
    for (auto disorder : disorder_order()) {
      RateRow row;
      row.style = style;
      row.disorder = std::string(to_string(disorder));
      bool any = false;
      Fraction avg;
      int contributing = 0;
      for (const auto& character_id : index.character_order) {
        std::optional<RateStat> stat;
        if (index.character_style.at(character_id) == style) {
          for (const auto& g : groups) {
            if (g.key.character_id == character_id && g.key.disorder == row.disorder) {
              stat = deterioration_stat(g.records);
              break;
            }
          }
        }
        if (stat) {
          avg.add(stat->count, stat->total);
          ++contributing;
          any = true;
        }
        row.per_character.push_back(stat);
      }
      if (!any) continue;
      avg.divide_by(contributing);
      row.average = avg;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

struct CidRow {
  std::string style;
  std::vector<std::optional<RateStat>> per_character;
};

// Table-2 analogue: clinically-important-difference rates for PHQ-9 groups.
inline std::vector<CidRow> cid_rows(const EvalDataset& dataset, const ReportIndex& index,
                                    int threshold = kDefaultCidThreshold) {
  auto groups = group_records(dataset, index);
  std::vector<CidRow> rows;
  for (const auto& style : index.style_order) {
    CidRow row;
    row.style = style;
    bool any = false;
    for (const auto& character_id : index.character_order) {
      std::optional<RateStat> stat;
      if (index.character_style.at(character_id) == style) {
        for (const auto& g : groups) {
          if (g.key.character_id == character_id && g.key.disorder == "depression" &&
              !g.records.empty() && g.records.front().initial.questionnaire_id == "phq9") {
            stat = cid_stat(g.records, threshold);
            break;
          }
        }
      }
      if (stat) any = true;
      row.per_character.push_back(stat);
    }
    if (any) rows.push_back(std::move(row));
  }
  return rows;
}

// Pooled (style, disorder) record sets, used for buckets and histograms.
inline std::vector<GroupedRecords> pooled_style_groups(const EvalDataset& dataset,
                                                       const ReportIndex& index) {
  std::vector<GroupedRecords> pools;
  for (const auto& style : index.style_order) {
    for (auto disorder : disorder_order()) {
      GroupedRecords g;
      g.key = GroupKey{"*", style, std::string(to_string(disorder))};
      for (const auto& r : dataset.records) {
        if (index.character_style.at(r.character_id) != style) continue;
        if (index.patient_disorder.at(r.patient_id) != disorder) continue;
        g.records.push_back(r);
      }
      if (!g.records.empty()) pools.push_back(std::move(g));
    }
  }
  return pools;
}

// Plain-text rates table for the terminal.
inline std::string render_rates_table(const EvalDataset& dataset, const ReportIndex& index) {
  auto rows = rate_rows(dataset, index);
  std::string out = "Deterioration rates (%)\n";
  out += "style,disorder";
  for (const auto& c : index.character_order) out += "," + c;
  out += ",average\n";
  for (const auto& row : rows) {
    out += row.style + "," + row.disorder;
    for (const auto& stat : row.per_character)
      out += "," + (stat ? format_percent(*stat, 2) : std::string("-"));
    out += "," + (row.average ? row.average->percent(2) : std::string("-"));
    out += "\n";
  }
  return out;
}

// Writes report.json, rates.csv, cid.csv, buckets.csv and histograms.csv
// into out_dir. Column orders are fixed and documented in the README.
inline void emit_report(const EvalDataset& dataset, const EvalPlan& plan,
                        const std::filesystem::path& out_dir,
                        int cid_threshold = kDefaultCidThreshold) {
  if (dataset.records.empty()) throw EmptyDataset("cannot report on an empty dataset");
  auto index = ReportIndex::from_plan(plan);
  std::filesystem::create_directories(out_dir);

  // report.json: one MetricsReport per (character, style, disorder) group.
  auto groups = group_records(dataset, index);
  json report;
  report["plan_digest"] = dataset.plan_digest;
  report["created_at"] = dataset.created_at;
  report["groups"] = json::array();
  for (const auto& g : groups)
    report["groups"].push_back(build_report(g.records, g.key, cid_threshold));
  write_file(out_dir / "report.json", report.dump(2) + "\n");

  // rates.csv
  {
    std::string csv;
    std::vector<std::string> header{"style", "disorder"};
    header.insert(header.end(), index.character_order.begin(), index.character_order.end());
    header.push_back("average");
    csv += detail::csv_row(header);
    for (const auto& row : rate_rows(dataset, index)) {
      std::vector<std::string> fields{row.style, row.disorder};
      for (const auto& stat : row.per_character)
        fields.push_back(stat ? format_percent(*stat, 2) : "");
      fields.push_back(row.average ? row.average->percent(2) : "");
      csv += detail::csv_row(fields);
    }
    write_file(out_dir / "rates.csv", csv);
  }

  // cid.csv
  {
    std::string csv;
    std::vector<std::string> header{"style"};
    header.insert(header.end(), index.character_order.begin(), index.character_order.end());
    csv += detail::csv_row(header);
    for (const auto& row : cid_rows(dataset, index, cid_threshold)) {
      std::vector<std::string> fields{row.style};
      for (const auto& stat : row.per_character)
        fields.push_back(stat ? format_percent(*stat, 1) : "");
      csv += detail::csv_row(fields);
    }
    write_file(out_dir / "cid.csv", csv);
  }

  // buckets.csv
  {
    std::string csv = detail::csv_row({"style", "disorder", "bucket", "count", "total", "percent"});
    for (const auto& pool : pooled_style_groups(dataset, index)) {
      auto spec = BucketSpec::default_for(pool.records.front().initial.questionnaire_id);
      for (const auto& row : score_change_bucket_stats(pool.records, spec)) {
        csv += detail::csv_row({pool.key.style, pool.key.disorder, row.bucket.label(),
                                std::to_string(row.stat.count), std::to_string(row.stat.total),
                                format_percent(row.stat, 1)});
      }
    }
    write_file(out_dir / "buckets.csv", csv);
  }

  // histograms.csv
  {
    std::string csv =
        detail::csv_row({"style", "disorder", "stage", "score", "probability"});
    char buf[32];
    for (const auto& pool : pooled_style_groups(dataset, index)) {
      auto hist = score_histograms(pool.records);
      auto emit = [&](const char* stage, const std::map<int, double>& side) {
        for (const auto& [score, p] : side) {
          std::snprintf(buf, sizeof(buf), "%.6f", p);
          csv += detail::csv_row(
              {pool.key.style, pool.key.disorder, stage, std::to_string(score), buf});
        }
      };
      emit("initial", hist.initial);
      emit("final", hist.final_scores);
    }
    write_file(out_dir / "histograms.csv", csv);
  }
}

}  // namespace mindbench
