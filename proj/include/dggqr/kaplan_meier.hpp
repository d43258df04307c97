#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "dggqr/errors.hpp"

namespace dggqr {

/// Product-limit estimate. Index 0 is (t = 0, S = 1); every later entry is
/// a distinct event time, and the curve is constant in between.
struct KMCurve {
  std::string label;
  std::vector<double> time;
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;
  std::vector<std::size_t> censored;

  /// S(t) as a right-continuous step function.
  double at(double t) const {
    const auto it = std::upper_bound(time.begin(), time.end(), t);
    if (it == time.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - time.begin()) - 1];
  }
};

/// Kaplan-Meier estimator for one group. Subjects censored at an event
/// time are still at risk at that time.
inline KMCurve kaplan_meier(const std::vector<double>& times, const std::vector<int>& status,
                            std::string label = "all") {
  if (times.size() != status.size()) throw DomainError("kaplan_meier: times and status differ in length");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  KMCurve km;
  km.label = std::move(label);
  km.time.push_back(0.0);
  km.survival.push_back(1.0);
  km.at_risk.push_back(times.size());
  km.events.push_back(0);
  km.censored.push_back(0);

  std::size_t at_risk = times.size();
  double s = 1.0;
  std::size_t pending_censored = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = times[order[i]];
    std::size_t d = 0;
    std::size_t c = 0;
    for (; i < order.size() && times[order[i]] == t; ++i) {
      (status[order[i]] == 1 ? d : c) += 1;
    }
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      km.time.push_back(t);
      km.survival.push_back(s);
      km.at_risk.push_back(at_risk);
      km.events.push_back(d);
      km.censored.push_back(pending_censored + c);
      pending_censored = 0;
    } else {
      pending_censored += c;
    }
    at_risk -= d + c;
  }
  return km;
}

/// One curve per group. With `levels` given, curves follow that order and
/// a level without subjects is skipped with a message in `warnings`;
/// otherwise every observed label is used in lexicographic order.
inline std::vector<KMCurve> kaplan_meier(const std::vector<double>& times, const std::vector<int>& status,
                                         const std::vector<std::string>& groups,
                                         const std::vector<std::string>& levels = {},
                                         std::vector<std::string>* warnings = nullptr) {
  if (groups.size() != times.size()) throw DomainError("kaplan_meier: group labels and times differ in length");
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> split;
  for (std::size_t i = 0; i < times.size(); ++i) {
    auto& [t, s] = split[groups[i]];
    t.push_back(times[i]);
    s.push_back(status[i]);
  }
  std::vector<KMCurve> out;
  if (levels.empty()) {
    for (auto& [label, ts] : split) out.push_back(kaplan_meier(ts.first, ts.second, label));
    return out;
  }
  for (const auto& level : levels) {
    auto it = split.find(level);
    if (it == split.end()) {
      if (warnings) warnings->push_back(fmt::format("group '{}' has no subjects; skipped", level));
      continue;
    }
    out.push_back(kaplan_meier(it->second.first, it->second.second, level));
  }
  return out;
}

} // namespace dggqr
