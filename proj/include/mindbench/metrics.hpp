#pragma once

// Quantitative outputs over an EvalDataset. Every metric is a pure function
// of the records; counts are kept as exact fractions and rounded only when a
// number is rendered for display.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mindbench/records.hpp"

namespace mindbench {

// Exact count/total fraction.
struct RateStat {
  long long count = 0;
  long long total = 0;

  double value() const { return total == 0 ? 0.0 : static_cast<double>(count) / total; }

  bool operator==(const RateStat&) const = default;
};

// count/total as a percentage with `decimals` fraction digits, rounded half
// up in exact integer arithmetic (7/24 with 2 decimals renders "29.17").
inline std::string format_percent(long long count, long long total, int decimals) {
  if (total <= 0) throw EmptyDataset("percentage of an empty set");
  long long scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  long long numerator = count * 100 * scale;
  long long q = numerator / total;
  long long r = numerator % total;
  if (2 * r >= total) ++q;
  std::string digits = std::to_string(q);
  if (decimals == 0) return digits;
  while (static_cast<int>(digits.size()) <= decimals) digits.insert(digits.begin(), '0');
  digits.insert(digits.size() - static_cast<std::size_t>(decimals), ".");
  return digits;
}

inline std::string format_percent(const RateStat& stat, int decimals) {
  return format_percent(stat.count, stat.total, decimals);
}

// Exact rational accumulator for averaging rates with unequal denominators.
struct Fraction {
  long long num = 0;
  long long den = 1;

  static long long gcd(long long a, long long b) { return b == 0 ? a : gcd(b, a % b); }

  void add(long long n, long long d) {
    if (d <= 0) throw EmptyDataset("fraction with non-positive denominator");
    __int128 new_num = static_cast<__int128>(num) * d + static_cast<__int128>(n) * den;
    __int128 new_den = static_cast<__int128>(den) * d;
    __int128 g = new_den;
    for (__int128 a = new_num < 0 ? -new_num : new_num; a != 0;) {
      __int128 t = g % a;
      g = a;
      a = t;
    }
    if (g == 0) g = 1;
    num = static_cast<long long>(new_num / g);
    den = static_cast<long long>(new_den / g);
  }

  void divide_by(long long k) {
    if (k <= 0) throw EmptyDataset("dividing a fraction by a non-positive count");
    __int128 new_den = static_cast<__int128>(den) * k;
    __int128 g = new_den;
    for (__int128 a = num < 0 ? -num : num; a != 0;) {
      __int128 t = g % a;
      g = a;
      a = t;
    }
    if (g == 0) g = 1;
    num = static_cast<long long>(num / g);
    den = static_cast<long long>(new_den / g);
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  // Percentage with exact half-up rounding, like format_percent.
  std::string percent(int decimals) const {
    long long scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    __int128 numerator = static_cast<__int128>(num) * 100 * scale;
    __int128 q = numerator / den;
    __int128 r = numerator % den;
    if (2 * r >= den) ++q;
    std::string digits = std::to_string(static_cast<long long>(q));
    if (decimals == 0) return digits;
    while (static_cast<int>(digits.size()) <= decimals) digits.insert(digits.begin(), '0');
    digits.insert(digits.size() - static_cast<std::size_t>(decimals), ".");
    return digits;
  }
};

namespace detail {

inline void require_uniform(std::span<const CaseRecord> records, const char* op) {
  if (records.empty()) throw EmptyDataset(std::string(op) + " over an empty record set");
  const auto& qid = records.front().initial.questionnaire_id;
  for (const auto& r : records) {
    validate_record(r);
    if (r.initial.questionnaire_id != qid)
      throw MismatchedQuestionnaire(std::string(op) + " across mixed questionnaires");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deterioration rate: fraction of records whose final total strictly exceeds
// the initial total. Ties are non-deterioration.

inline RateStat deterioration_stat(std::span<const CaseRecord> records) {
  detail::require_uniform(records, "deterioration_rate");
  RateStat stat{0, static_cast<long long>(records.size())};
  for (const auto& r : records)
    if (r.final_result.total > r.initial.total) ++stat.count;
  return stat;
}

inline double deterioration_rate(std::span<const CaseRecord> records) {
  return deterioration_stat(records).value();
}

// ---------------------------------------------------------------------------
// Clinically important difference: fraction of records with delta at or above
// the threshold (PHQ-9 convention: 5 points).

inline constexpr int kDefaultCidThreshold = 5;

inline RateStat cid_stat(std::span<const CaseRecord> records,
                         int threshold = kDefaultCidThreshold) {
  detail::require_uniform(records, "cid_rate");
  RateStat stat{0, static_cast<long long>(records.size())};
  for (const auto& r : records)
    if (record_delta(r) >= threshold) ++stat.count;
  return stat;
}

inline double cid_rate(std::span<const CaseRecord> records, int threshold = kDefaultCidThreshold) {
  return cid_stat(records, threshold).value();
}

// ---------------------------------------------------------------------------
// Score-change buckets

// Closed integer interval with optional open ends: lo <= delta <= hi.
struct Bucket {
  std::optional<int> lo;
  std::optional<int> hi;

  bool contains(int d) const { return (!lo || d >= *lo) && (!hi || d <= *hi); }

  std::string label() const {
    if (!lo && hi) return "<=" + std::to_string(*hi);
    if (lo && !hi) return ">=" + std::to_string(*lo);
    if (lo && hi)
      return *lo == *hi ? std::to_string(*lo)
                        : std::to_string(*lo) + "-" + std::to_string(*hi);
    return "all";
  }

  bool operator==(const Bucket&) const = default;
};

struct BucketSpec {
  std::vector<Bucket> buckets;

  // Disjoint and exhaustive over [lo, hi]; throws otherwise.
  void validate_over(int lo, int hi) const {
    for (int d = lo; d <= hi; ++d) {
      int owners = 0;
      for (const auto& b : buckets) owners += b.contains(d) ? 1 : 0;
      if (owners == 0)
        throw UncoveredDelta("delta " + std::to_string(d) + " not covered by bucket spec");
      if (owners > 1)
        throw ValidationError("delta " + std::to_string(d) + " covered by multiple buckets");
    }
  }

  // Display buckets matching the published score-change brackets. The PDI
  // upper bracket is capped at +11 for display parity with the observed
  // range; deltas beyond it raise UncoveredDelta.
  static BucketSpec default_for(const std::string& questionnaire_id) {
    BucketSpec spec;
    spec.buckets.push_back({std::nullopt, 0});
    spec.buckets.push_back({1, 2});
    spec.buckets.push_back({3, 4});
    if (questionnaire_id == "pdi21")
      spec.buckets.push_back({5, 11});
    else
      spec.buckets.push_back({5, std::nullopt});
    return spec;
  }
};

struct BucketRow {
  Bucket bucket;
  RateStat stat;

  bool operator==(const BucketRow&) const = default;
};

// Assigns every record to exactly one bucket by its score delta.
inline std::vector<BucketRow> score_change_bucket_stats(std::span<const CaseRecord> records,
                                                        const BucketSpec& spec) {
  detail::require_uniform(records, "score_change_buckets");
  std::vector<BucketRow> rows;
  rows.reserve(spec.buckets.size());
  for (const auto& b : spec.buckets)
    rows.push_back({b, {0, static_cast<long long>(records.size())}});
  for (const auto& r : records) {
    int d = record_delta(r);
    int owners = 0;
    for (auto& row : rows) {
      if (row.bucket.contains(d)) {
        ++row.stat.count;
        ++owners;
      }
    }
    if (owners == 0) throw UncoveredDelta("delta " + std::to_string(d) + " not covered");
    if (owners > 1) throw ValidationError("delta " + std::to_string(d) + " in multiple buckets");
  }
  return rows;
}

inline std::map<std::string, double> score_change_buckets(std::span<const CaseRecord> records,
                                                          const BucketSpec& spec) {
  std::map<std::string, double> out;
  for (const auto& row : score_change_bucket_stats(records, spec))
    out[row.bucket.label()] = row.stat.value();
  return out;
}

// ---------------------------------------------------------------------------
// Score histograms (plot-ready: probability mass per score value)

struct ScoreHistograms {
  std::map<int, double> initial;
  std::map<int, double> final_scores;
};

inline ScoreHistograms score_histograms(std::span<const CaseRecord> records) {
  detail::require_uniform(records, "score_histograms");
  std::map<int, long long> init_counts;
  std::map<int, long long> final_counts;
  for (const auto& r : records) {
    ++init_counts[r.initial.total];
    ++final_counts[r.final_result.total];
  }
  ScoreHistograms out;
  auto n = static_cast<double>(records.size());
  for (const auto& [score, count] : init_counts) out.initial[score] = count / n;
  for (const auto& [score, count] : final_counts) out.final_scores[score] = count / n;
  return out;
}

// ---------------------------------------------------------------------------
// Grouped report

struct GroupKey {
  std::string character_id;
  std::string style;
  std::string disorder;

  bool operator==(const GroupKey&) const = default;
  auto operator<=>(const GroupKey&) const = default;
};

struct MetricsReport {
  GroupKey group;
  std::string questionnaire_id;
  RateStat deterioration;
  std::optional<RateStat> cid;  // PHQ-9 groups only
  std::vector<BucketRow> buckets;
  ScoreHistograms histograms;
};

inline MetricsReport build_report(std::span<const CaseRecord> records, GroupKey group,
                                  int cid_threshold = kDefaultCidThreshold) {
  detail::require_uniform(records, "build_report");
  MetricsReport report;
  report.group = std::move(group);
  report.questionnaire_id = records.front().initial.questionnaire_id;
  report.deterioration = deterioration_stat(records);
  if (report.questionnaire_id == "phq9") report.cid = cid_stat(records, cid_threshold);
  report.buckets =
      score_change_bucket_stats(records, BucketSpec::default_for(report.questionnaire_id));
  report.histograms = score_histograms(records);
  return report;
}

inline void to_json(json& j, const RateStat& s) {
  j = json{{"count", s.count}, {"total", s.total}, {"value", s.value()}};
}

inline void to_json(json& j, const MetricsReport& r) {
  json buckets = json::object();
  for (const auto& row : r.buckets) buckets[row.bucket.label()] = row.stat.value();
  json hist_initial = json::object();
  for (const auto& [score, p] : r.histograms.initial) hist_initial[std::to_string(score)] = p;
  json hist_final = json::object();
  for (const auto& [score, p] : r.histograms.final_scores) hist_final[std::to_string(score)] = p;
  j = json{{"character", r.group.character_id},
           {"style", r.group.style},
           {"disorder", r.group.disorder},
           {"questionnaire_id", r.questionnaire_id},
           {"deterioration_rate", r.deterioration},
           {"bucket_proportions", buckets},
           {"histogram_initial", hist_initial},
           {"histogram_final", hist_final}};
  if (r.cid) j["cid_rate"] = *r.cid;
}

}  // namespace mindbench
