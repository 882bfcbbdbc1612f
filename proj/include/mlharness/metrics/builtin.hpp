#pragma once

#include <span>
#include <string>
#include <vector>

// Plain-vector forms of the builtin metrics. The registry adapters in
// metric_registry.cpp reshape submission tables into these calls.
namespace mlharness::metrics {

inline constexpr double kProbabilityClip = 1e-15;

double accuracy(std::span<const std::string> truth, std::span<const std::string> pred);
double mse(std::span<const double> truth, std::span<const double> pred);
double rmse(std::span<const double> truth, std::span<const double> pred);
double mae(std::span<const double> truth, std::span<const double> pred);
double rmsle(std::span<const double> truth, std::span<const double> pred);
// Percent scale, 0..200; a 0/0 term contributes 0.
double smape(std::span<const double> truth, std::span<const double> pred);

// Labels in {0,1}; probabilities clipped to [kProbabilityClip, 1 - kProbabilityClip].
double log_loss(std::span<const double> labels, std::span<const double> probs);
// Row-major rows x classes; each row of `probs` is clipped then renormalised.
double multiclass_log_loss(const std::vector<std::vector<double>>& truth,
                           const std::vector<std::vector<double>>& probs);

// Mann-Whitney form, ties contribute 1/2. Throws DegenerateInput when only
// one class is present or a label is not 0/1.
double roc_auc(std::span<const double> labels, std::span<const double> scores);

enum class FbetaAverage { Macro, Micro, Binary };
double f_beta(std::span<const std::string> truth, std::span<const std::string> pred,
              double beta, FbetaAverage average, const std::string& positive_label = "1");

// `truth[i]` lists the relevant labels of row i, `pred[i]` the ranked
// predictions; rows without relevant labels contribute 0.
double map_at_k(const std::vector<std::vector<std::string>>& truth,
                const std::vector<std::vector<std::string>>& pred, std::size_t k);

// Integer ratings in [min_rating, max_rating].
double quadratic_weighted_kappa(std::span<const long> truth, std::span<const long> pred,
                                long min_rating, long max_rating);

// Gini of `pred` against `truth`, divided by the Gini of `truth` against
// itself. Tied predictions share their mean position.
double normalized_gini(std::span<const double> truth, std::span<const double> pred);

}  // namespace mlharness::metrics
