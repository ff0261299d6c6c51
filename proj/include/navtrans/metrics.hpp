#pragma once

// Plan comparison: Levenshtein edit distance (insert, delete and substitute
// one behavior at unit cost), M@k matching and multiset F1.

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <ranges>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "navtrans/graph.hpp"

namespace navtrans {

template <std::ranges::forward_range A, std::ranges::forward_range B>
std::size_t edit_distance(const A& pred, const B& gold) {
  const std::size_t n = std::ranges::distance(gold);
  std::vector<std::size_t> row(n + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  std::size_t i = 0;
  for (const auto& p : pred) {
    ++i;
    std::size_t diag = row[0];
    row[0] = i;
    std::size_t j = 0;
    for (const auto& g : gold) {
      ++j;
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (p == g ? 0 : 1)});
      diag = up;
    }
  }
  return row[n];
}

inline bool match_at_k(std::size_t distance, std::size_t k) { return distance <= k; }

template <std::ranges::forward_range A, std::ranges::forward_range B>
bool match_at_k(const A& pred, const B& gold, std::size_t k) {
  return match_at_k(edit_distance(pred, gold), k);
}

// Harmonic mean of multiset precision and recall. Throws
// std::invalid_argument for an empty gold plan.
template <std::ranges::forward_range A, std::ranges::forward_range B>
double f1_plan(const A& pred, const B& gold) {
  using T = std::ranges::range_value_t<A>;
  std::map<T, std::pair<std::size_t, std::size_t>> counts;
  std::size_t np = 0, ng = 0;
  for (const auto& p : pred) {
    ++counts[p].first;
    ++np;
  }
  for (const auto& g : gold) {
    ++counts[g].second;
    ++ng;
  }
  if (ng == 0) throw std::invalid_argument("f1_plan: empty gold plan");
  std::size_t overlap = 0;
  for (const auto& [key, c] : counts) overlap += std::min(c.first, c.second);
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(np);
  const double recall = static_cast<double>(overlap) / static_cast<double>(ng);
  return 2.0 * precision * recall / (precision + recall);
}

struct SampleScore {
  std::size_t edit_distance = 0;
  double f1 = 0.0;
};

SampleScore score_plan(const Plan& pred, const Plan& gold);

struct MetricsReport {
  double f1 = 0.0;                        // percent
  std::array<double, 3> m_at{0, 0, 0};    // percent, k = 0, 1, 2
  double ed = 0.0;                        // mean edit distance
  std::size_t n = 0;

  bool operator==(const MetricsReport&) const = default;
};

// Throws std::invalid_argument for an empty input.
MetricsReport aggregate(std::span<const SampleScore> scores);

// "F1 / M@0 / M@1 / M@2 / ED" with two decimals.
std::string format_row(const MetricsReport& report);

// Plain-text table in the column order F1, M@0, M@1, M@2, ED; one row per
// (label, report) pair.
std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows);

// JSON object {"n", "f1", "m_at_0", "m_at_1", "m_at_2", "ed"}.
std::string report_json(const MetricsReport& report);
MetricsReport parse_report_json(const std::string& text);

}  // namespace navtrans
