#include <algorithm>
#include <cmath>

#include "mlharness/errors.hpp"
#include "mlharness/rank/rank.hpp"

namespace mlharness::rank {

namespace {

// Integral of the profile over [0, x]: each task contributes its indicator
// from log10(r) onward.
double profile_area(const std::vector<double>& logs, double x) {
  double area = 0.0;
  for (double l : logs) area += std::max(0.0, x - l);
  return area / static_cast<double>(logs.size());
}

}  // namespace

RatioMatrix performance_ratios(const ScoreMatrix& scores, double epsilon, double cap) {
  scores.validate();
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be non-negative");
  if (!(cap >= 1.0)) throw InvalidArgument("cap must be at least 1");

  RatioMatrix out;
  out.models = scores.models;
  out.epsilon = epsilon;
  out.cap = cap;

  for (std::size_t t = 0; t < scores.tasks.size(); ++t) {
    const auto& row = scores.scores[t];
    const Direction dir = scores.directions[t];
    std::vector<double> feasible;
    for (const auto& v : row) {
      if (v) feasible.push_back(*v);
    }
    if (feasible.empty()) {
      out.dropped_tasks.push_back(scores.tasks[t]);
      out.warnings.push_back("task '" + scores.tasks[t] + "' has no feasible score; dropped");
      continue;
    }

    std::vector<double> ratios(row.size(), 0.0);
    if (dir == Direction::LowerBetter) {
      const double best = *std::min_element(feasible.begin(), feasible.end());
      if (best <= 0.0) {
        throw NonPositiveScore("task '" + scores.tasks[t] + "' has a non-positive best loss");
      }
      for (std::size_t m = 0; m < row.size(); ++m) {
        if (row[m]) ratios[m] = *row[m] / best;
      }
    } else {
      if (*std::min_element(feasible.begin(), feasible.end()) <= 0.0) {
        throw NonPositiveScore("task '" + scores.tasks[t] +
                               "' has a non-positive score under ratio inversion");
      }
      const double best = *std::max_element(feasible.begin(), feasible.end());
      for (std::size_t m = 0; m < row.size(); ++m) {
        if (row[m]) ratios[m] = best / *row[m];
      }
    }

    double worst = 1.0;
    for (std::size_t m = 0; m < row.size(); ++m) {
      if (row[m]) worst = std::max(worst, ratios[m]);
    }
    for (std::size_t m = 0; m < row.size(); ++m) {
      if (!row[m]) ratios[m] = (1.0 + epsilon) * worst;
      ratios[m] = std::min(ratios[m], cap);
    }
    out.tasks.push_back(scores.tasks[t]);
    out.ratios.push_back(std::move(ratios));
  }
  if (out.tasks.empty()) throw AllInfeasibleTask("every task lacks a feasible score");
  return out;
}

double PerformanceProfile::at(double tau) const {
  double rho = 0.0;
  for (const auto& [x, value] : breakpoints) {
    if (x <= tau) rho = value;
  }
  return rho;
}

AupReport aup(const RatioMatrix& ratios, const AupOptions& options) {
  if (ratios.tasks.empty() || ratios.models.empty()) {
    throw InvalidArgument("ratio matrix is empty");
  }
  const std::size_t n_tasks = ratios.tasks.size();
  const std::size_t n_models = ratios.models.size();

  std::vector<std::vector<double>> logs(n_models, std::vector<double>(n_tasks));
  double tau_max = 0.0;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    for (std::size_t m = 0; m < n_models; ++m) {
      const double r = ratios.ratios[t][m];
      if (!(r >= 1.0)) throw InvalidArgument("ratios must be at least 1");
      logs[m][t] = std::log10(r);
      tau_max = std::max(tau_max, logs[m][t]);
    }
  }

  AupReport report;
  report.result.models = ratios.models;
  report.result.tau_max = tau_max;
  report.result.epsilon = ratios.epsilon;
  report.result.cap = ratios.cap;
  report.result.literal_lower_bound = options.literal_lower_bound;

  for (std::size_t m = 0; m < n_models; ++m) {
    std::vector<double> sorted = logs[m];
    std::sort(sorted.begin(), sorted.end());
    PerformanceProfile profile;
    profile.model = ratios.models[m];
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double rho = static_cast<double>(i + 1) / static_cast<double>(n_tasks);
      if (!profile.breakpoints.empty() && profile.breakpoints.back().first == sorted[i]) {
        profile.breakpoints.back().second = rho;
      } else {
        profile.breakpoints.emplace_back(sorted[i], rho);
      }
    }
    report.profiles.push_back(std::move(profile));

    double value;
    if (options.literal_lower_bound) {
      value = profile_area(logs[m], tau_max) - profile_area(logs[m], 1.0);
    } else if (tau_max == 0.0) {
      value = 1.0;
    } else {
      value = profile_area(logs[m], tau_max);
    }
    report.result.values.push_back(value);
  }
  return report;
}

}  // namespace mlharness::rank
