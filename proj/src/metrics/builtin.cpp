#include "mlharness/metrics/builtin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "mlharness/common.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::metrics {

namespace {

void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) throw InvalidArgument("truth and prediction lengths differ");
  if (a == 0) throw DegenerateInput("metric needs at least one row");
}

double clip_probability(double p) {
  return std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip);
}

bool same_label(const std::string& a, const std::string& b) {
  const std::string ta = trim(a);
  const std::string tb = trim(b);
  if (ta == tb) return true;
  const auto na = parse_double(ta);
  const auto nb = parse_double(tb);
  return na && nb && *na == *nb;
}

// 1-based ascending ranks; tied values share the mean of their positions.
std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

double gini(std::span<const double> truth, std::span<const double> pred) {
  const auto n = static_cast<double>(truth.size());
  const double total = std::accumulate(truth.begin(), truth.end(), 0.0);
  if (total == 0.0) throw DegenerateInput("normalized_gini needs a non-zero target sum");
  const std::vector<double> asc = midranks(pred);
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    // Descending position is n + 1 - ascending rank.
    acc += truth[i] * (asc[i] - (n + 1.0) / 2.0);
  }
  return acc / (n * total);
}

}  // namespace

double accuracy(std::span<const std::string> truth, std::span<const std::string> pred) {
  require_same_size(truth.size(), pred.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (same_label(truth[i], pred[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double mse(std::span<const double> truth, std::span<const double> pred) {
  require_same_size(truth.size(), pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = pred[i] - truth[i];
    sum += d * d;
  }
  return sum / static_cast<double>(truth.size());
}

double rmse(std::span<const double> truth, std::span<const double> pred) {
  return std::sqrt(mse(truth, pred));
}

double mae(std::span<const double> truth, std::span<const double> pred) {
  require_same_size(truth.size(), pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sum += std::abs(pred[i] - truth[i]);
  return sum / static_cast<double>(truth.size());
}

double rmsle(std::span<const double> truth, std::span<const double> pred) {
  require_same_size(truth.size(), pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] <= -1.0 || pred[i] <= -1.0) {
      throw DegenerateInput("rmsle is undefined for values <= -1");
    }
    const double d = std::log1p(pred[i]) - std::log1p(truth[i]);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(truth.size()));
}

double smape(std::span<const double> truth, std::span<const double> pred) {
  require_same_size(truth.size(), pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double denom = (std::abs(truth[i]) + std::abs(pred[i])) / 2.0;
    if (denom == 0.0) continue;
    sum += std::abs(pred[i] - truth[i]) / denom;
  }
  return 100.0 * sum / static_cast<double>(truth.size());
}

double log_loss(std::span<const double> labels, std::span<const double> probs) {
  require_same_size(labels.size(), probs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) {
      throw DegenerateInput("log_loss labels must be 0 or 1");
    }
    const double p = clip_probability(probs[i]);
    sum += labels[i] == 1.0 ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(labels.size());
}

double multiclass_log_loss(const std::vector<std::vector<double>>& truth,
                           const std::vector<std::vector<double>>& probs) {
  require_same_size(truth.size(), probs.size());
  double sum = 0.0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    if (truth[r].size() != probs[r].size() || truth[r].empty()) {
      throw InvalidArgument("class count differs between truth and prediction");
    }
    std::vector<double> p(probs[r].size());
    std::transform(probs[r].begin(), probs[r].end(), p.begin(), clip_probability);
    const double row_sum = std::accumulate(p.begin(), p.end(), 0.0);
    for (std::size_t c = 0; c < p.size(); ++c) {
      if (truth[r][c] != 0.0) sum -= truth[r][c] * std::log(p[c] / row_sum);
    }
  }
  return sum / static_cast<double>(truth.size());
}

double roc_auc(std::span<const double> labels, std::span<const double> scores) {
  require_same_size(labels.size(), scores.size());
  const std::vector<double> ranks = midranks(scores);
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1.0) {
      positives += 1.0;
      rank_sum += ranks[i];
    } else if (labels[i] != 0.0) {
      throw DegenerateInput("roc_auc labels must be 0 or 1");
    }
  }
  const double negatives = static_cast<double>(labels.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw DegenerateInput("roc_auc needs both classes present");
  }
  const double u = rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

double f_beta(std::span<const std::string> truth, std::span<const std::string> pred,
              double beta, FbetaAverage average, const std::string& positive_label) {
  require_same_size(truth.size(), pred.size());
  if (!(beta > 0.0)) throw InvalidArgument("f_beta needs beta > 0");
  const double b2 = beta * beta;
  auto score = [b2](double tp, double fp, double fn) {
    const double denom = (1.0 + b2) * tp + b2 * fn + fp;
    return denom == 0.0 ? 0.0 : (1.0 + b2) * tp / denom;
  };

  std::map<std::string, std::array<double, 3>> counts;  // tp, fp, fn
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::string t = trim(truth[i]);
    const std::string p = trim(pred[i]);
    if (t == p) {
      counts[t][0] += 1.0;
    } else {
      counts[p][1] += 1.0;
      counts[t][2] += 1.0;
    }
  }

  switch (average) {
    case FbetaAverage::Binary: {
      const auto it = counts.find(positive_label);
      if (it == counts.end()) return 0.0;
      return score(it->second[0], it->second[1], it->second[2]);
    }
    case FbetaAverage::Micro: {
      double tp = 0, fp = 0, fn = 0;
      for (const auto& [label, c] : counts) {
        tp += c[0];
        fp += c[1];
        fn += c[2];
      }
      return score(tp, fp, fn);
    }
    case FbetaAverage::Macro:
    default: {
      double sum = 0.0;
      for (const auto& [label, c] : counts) sum += score(c[0], c[1], c[2]);
      return sum / static_cast<double>(counts.size());
    }
  }
}

double map_at_k(const std::vector<std::vector<std::string>>& truth,
                const std::vector<std::vector<std::string>>& pred, std::size_t k) {
  require_same_size(truth.size(), pred.size());
  if (k == 0) throw InvalidArgument("map_at_k needs k >= 1");
  double total = 0.0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const std::set<std::string> relevant(truth[r].begin(), truth[r].end());
    if (relevant.empty()) continue;
    std::set<std::string> seen;
    double hits = 0.0;
    double ap = 0.0;
    const std::size_t depth = std::min(k, pred[r].size());
    for (std::size_t i = 0; i < depth; ++i) {
      const std::string& label = pred[r][i];
      if (relevant.count(label) && !seen.count(label)) {
        hits += 1.0;
        ap += hits / static_cast<double>(i + 1);
      }
      seen.insert(label);
    }
    total += ap / static_cast<double>(std::min(relevant.size(), k));
  }
  return total / static_cast<double>(truth.size());
}

double quadratic_weighted_kappa(std::span<const long> truth, std::span<const long> pred,
                                long min_rating, long max_rating) {
  require_same_size(truth.size(), pred.size());
  if (max_rating <= min_rating) {
    throw DegenerateInput("quadratic_weighted_kappa needs at least two rating levels");
  }
  const auto levels = static_cast<std::size_t>(max_rating - min_rating + 1);
  std::vector<double> observed(levels * levels, 0.0);
  std::vector<double> hist_truth(levels, 0.0);
  std::vector<double> hist_pred(levels, 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < min_rating || truth[i] > max_rating || pred[i] < min_rating ||
        pred[i] > max_rating) {
      throw InvalidArgument("rating outside [min_rating, max_rating]");
    }
    const auto a = static_cast<std::size_t>(truth[i] - min_rating);
    const auto b = static_cast<std::size_t>(pred[i] - min_rating);
    observed[a * levels + b] += 1.0;
    hist_truth[a] += 1.0;
    hist_pred[b] += 1.0;
  }
  const auto n = static_cast<double>(truth.size());
  const double span2 = static_cast<double>((levels - 1) * (levels - 1));
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < levels; ++i) {
    for (std::size_t j = 0; j < levels; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double w = d * d / span2;
      num += w * observed[i * levels + j];
      den += w * hist_truth[i] * hist_pred[j] / n;
    }
  }
  if (den == 0.0) throw DegenerateInput("quadratic_weighted_kappa expected disagreement is zero");
  return 1.0 - num / den;
}

double normalized_gini(std::span<const double> truth, std::span<const double> pred) {
  require_same_size(truth.size(), pred.size());
  const double reference = gini(truth, truth);
  if (reference == 0.0) throw DegenerateInput("normalized_gini needs a non-constant target");
  return gini(truth, pred) / reference;
}

}  // namespace mlharness::metrics
