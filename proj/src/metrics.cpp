#include "navtrans/metrics.hpp"

#include <cstdio>
#include <json.hpp>

namespace navtrans {

using json = nlohmann::json;

SampleScore score_plan(const Plan& pred, const Plan& gold) {
  return {edit_distance(pred, gold), f1_plan(pred, gold)};
}

MetricsReport aggregate(std::span<const SampleScore> scores) {
  if (scores.empty()) throw std::invalid_argument("aggregate: no samples");
  MetricsReport r;
  r.n = scores.size();
  std::array<std::size_t, 3> matched{0, 0, 0};
  double f1 = 0.0, ed = 0.0;
  for (const auto& s : scores) {
    f1 += s.f1;
    ed += static_cast<double>(s.edit_distance);
    for (std::size_t k = 0; k < 3; ++k) matched[k] += match_at_k(s.edit_distance, k) ? 1 : 0;
  }
  const double n = static_cast<double>(r.n);
  r.f1 = 100.0 * f1 / n;
  for (std::size_t k = 0; k < 3; ++k) r.m_at[k] = 100.0 * static_cast<double>(matched[k]) / n;
  r.ed = ed / n;
  return r;
}

std::string format_row(const MetricsReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f / %.2f / %.2f / %.2f / %.2f", r.f1, r.m_at[0], r.m_at[1], r.m_at[2], r.ed);
  return buf;
}

std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
  std::size_t label_width = 5;
  for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());
  auto line = [&](const std::string& label, const std::array<std::string, 5>& cells) {
    std::string s = label + std::string(label_width - label.size(), ' ');
    for (const auto& c : cells) s += " | " + std::string(6 - std::min<std::size_t>(6, c.size()), ' ') + c;
    return s + "\n";
  };
  std::string out = line("", {"F1", "M@0", "M@1", "M@2", "ED"});
  out += std::string(label_width + 5 * 9, '-') + "\n";
  char buf[32];
  auto cell = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  for (const auto& [label, r] : rows)
    out += line(label, {cell(r.f1), cell(r.m_at[0]), cell(r.m_at[1]), cell(r.m_at[2]), cell(r.ed)});
  return out;
}

std::string report_json(const MetricsReport& r) {
  json j = {{"n", r.n},
            {"f1", r.f1},
            {"m_at_0", r.m_at[0]},
            {"m_at_1", r.m_at[1]},
            {"m_at_2", r.m_at[2]},
            {"ed", r.ed}};
  return j.dump();
}

MetricsReport parse_report_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport r;
  r.n = j.at("n").get<std::size_t>();
  r.f1 = j.at("f1").get<double>();
  r.m_at = {j.at("m_at_0").get<double>(), j.at("m_at_1").get<double>(), j.at("m_at_2").get<double>()};
  r.ed = j.at("ed").get<double>();
  return r;
}

}  // namespace navtrans
