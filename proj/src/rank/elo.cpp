#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "mlharness/csv.hpp"
#include "mlharness/errors.hpp"
#include "mlharness/rank/rank.hpp"

namespace mlharness::rank {

namespace {

struct Sample {
  std::size_t winner;
  std::size_t loser;
  double weight;
};

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::string> resolve_models(const std::vector<BattleRecord>& battles,
                                        std::vector<std::string> models) {
  if (models.empty()) {
    for (const auto& b : battles) {
      for (const auto* name : {&b.model_a, &b.model_b}) {
        if (std::find(models.begin(), models.end(), *name) == models.end()) models.push_back(*name);
      }
    }
  }
  return models;
}

std::vector<Sample> build_samples(const std::vector<BattleRecord>& battles,
                                  const std::vector<std::string>& models) {
  auto index = [&](const std::string& name) {
    const auto it = std::find(models.begin(), models.end(), name);
    if (it == models.end()) throw InvalidArgument("battle names unknown model '" + name + "'");
    return static_cast<std::size_t>(it - models.begin());
  };
  std::vector<Sample> samples;
  samples.reserve(battles.size() * 2);
  for (const auto& b : battles) {
    if (b.model_a == b.model_b) throw InvalidArgument("battle pits a model against itself");
    if (!(b.weight > 0.0)) throw InvalidArgument("battle weight must be positive");
    const std::size_t a = index(b.model_a);
    const std::size_t c = index(b.model_b);
    switch (b.outcome) {
      case BattleOutcome::AWins: samples.push_back({a, c, b.weight}); break;
      case BattleOutcome::BWins: samples.push_back({c, a, b.weight}); break;
      case BattleOutcome::Tie:
        samples.push_back({a, c, b.weight / 2.0});
        samples.push_back({c, a, b.weight / 2.0});
        break;
    }
  }
  return samples;
}

double loss_of(const std::vector<Sample>& samples, const Eigen::VectorXd& r, double log_base,
               double lambda) {
  double loss = 0.0;
  for (const auto& s : samples) loss += s.weight * softplus(-log_base * (r[s.winner] - r[s.loser]));
  return loss + lambda * r.squaredNorm();
}

Eigen::VectorXd solve(const std::vector<Sample>& samples, std::size_t n, const EloConfig& config) {
  const double log_base = std::log(config.base);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  double loss = loss_of(samples, r, log_base, config.lambda);

  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    Eigen::VectorXd grad = 2.0 * config.lambda * r;
    Eigen::MatrixXd hess =
        2.0 * config.lambda * Eigen::MatrixXd::Identity(grad.size(), grad.size());
    for (const auto& s : samples) {
      const double z = log_base * (r[s.winner] - r[s.loser]);
      const double p = sigmoid(-z);
      const double g = -s.weight * log_base * p;
      const auto w = static_cast<Eigen::Index>(s.winner);
      const auto l = static_cast<Eigen::Index>(s.loser);
      grad[w] += g;
      grad[l] -= g;
      const double h = s.weight * log_base * log_base * p * (1.0 - p);
      hess(w, w) += h;
      hess(l, l) += h;
      hess(w, l) -= h;
      hess(l, w) -= h;
    }
    if (grad.norm() <= config.gradient_tolerance) return r;

    Eigen::VectorXd step;
    if (config.lambda > 0.0) {
      step = hess.ldlt().solve(grad);
    } else {
      step = hess.completeOrthogonalDecomposition().solve(grad);
    }
    // Close to the optimum the loss change drops below rounding, so the
    // full Newton step is taken unchecked.
    Eigen::VectorXd next = r - step;
    double next_loss = loss_of(samples, next, log_base, config.lambda);
    if (grad.norm() > 1e-6) {
      const double slope = grad.dot(step);
      double t = 1.0;
      while (next_loss > loss - 1e-4 * t * slope && t > 1e-12) {
        t *= 0.5;
        next = r - t * step;
        next_loss = loss_of(samples, next, log_base, config.lambda);
      }
    }
    r = std::move(next);
    loss = next_loss;
  }
  throw NonConvergence("Bradley-Terry fit did not reach the gradient tolerance within " +
                       std::to_string(config.max_iterations) + " iterations");
}

}  // namespace

std::string to_string(BattleOutcome o) {
  switch (o) {
    case BattleOutcome::AWins: return "AWins";
    case BattleOutcome::BWins: return "BWins";
    case BattleOutcome::Tie: return "Tie";
  }
  return "";
}

std::vector<BattleRecord> battles_from_scores(const ScoreMatrix& scores) {
  scores.validate();
  std::vector<BattleRecord> out;
  for (std::size_t t = 0; t < scores.tasks.size(); ++t) {
    const auto& row = scores.scores[t];
    for (std::size_t i = 0; i < scores.models.size(); ++i) {
      for (std::size_t j = i + 1; j < scores.models.size(); ++j) {
        BattleRecord b{scores.models[i], scores.models[j], BattleOutcome::Tie, 1.0, scores.tasks[t]};
        if (row[i] && row[j]) {
          if (strictly_better(*row[i], *row[j], scores.directions[t])) {
            b.outcome = BattleOutcome::AWins;
          } else if (strictly_better(*row[j], *row[i], scores.directions[t])) {
            b.outcome = BattleOutcome::BWins;
          }
        } else if (row[i]) {
          b.outcome = BattleOutcome::AWins;
        } else if (row[j]) {
          b.outcome = BattleOutcome::BWins;
        }
        out.push_back(std::move(b));
      }
    }
  }
  return out;
}

void EloConfig::validate() const {
  if (!(base > 1.0)) throw InvalidArgument("Elo base must exceed 1");
  if (!(scale > 0.0)) throw InvalidArgument("Elo scale must be positive");
  if (!(lambda >= 0.0)) throw InvalidArgument("regularisation must be non-negative");
  if (bootstrap_rounds < 1) throw InvalidArgument("bootstrap needs at least one round");
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be positive");
}

double bradley_terry_loss(const std::vector<BattleRecord>& battles,
                          const std::vector<std::string>& models, const std::vector<double>& r,
                          const EloConfig& config) {
  if (r.size() != models.size()) throw InvalidArgument("one strength per model expected");
  const auto samples = build_samples(battles, models);
  const Eigen::Map<const Eigen::VectorXd> v(r.data(), static_cast<Eigen::Index>(r.size()));
  return loss_of(samples, v, std::log(config.base), config.lambda);
}

RatingResult fit_bradley_terry(const std::vector<BattleRecord>& battles, const EloConfig& config,
                               std::vector<std::string> models) {
  config.validate();
  models = resolve_models(battles, std::move(models));
  if (models.size() < 2) throw NotEnoughModels("Bradley-Terry needs at least two models");
  if (battles.empty()) throw NotEnoughModels("Bradley-Terry needs at least one battle");
  const auto samples = build_samples(battles, models);
  const Eigen::VectorXd r = solve(samples, models.size(), config);

  RatingResult out;
  out.models = models;
  for (Eigen::Index i = 0; i < r.size(); ++i) out.ratings.push_back(config.scale * r[i] + config.offset);
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

RatingResult bootstrap_ratings(const std::vector<BattleRecord>& battles, const EloConfig& config,
                               std::vector<std::string> models) {
  RatingResult out = fit_bradley_terry(battles, config, std::move(models));
  const std::size_t n_models = out.models.size();
  std::vector<std::vector<double>> draws(n_models);

  std::vector<BattleRecord> sample(battles.size());
  for (std::size_t round = 0; round < config.bootstrap_rounds; ++round) {
    SeededRng rng(config.seed + round);
    for (auto& b : sample) b = battles[rng.below(battles.size())];
    const RatingResult fit = fit_bradley_terry(sample, config, out.models);
    for (std::size_t m = 0; m < n_models; ++m) draws[m].push_back(fit.ratings[m]);
  }
  for (std::size_t m = 0; m < n_models; ++m) {
    out.median.push_back(quantile(draws[m], 0.5));
    out.lo95.push_back(quantile(draws[m], 0.025));
    out.hi95.push_back(quantile(draws[m], 0.975));
  }
  return out;
}

std::string ratings_to_csv(const RatingResult& result) {
  std::string out = "model,rating,median,lo95,hi95\n";
  for (std::size_t i = 0; i < result.models.size(); ++i) {
    auto cell = [&](const std::vector<double>& v) {
      return i < v.size() ? format_fixed(v[i], 6) : std::string();
    };
    out += csv_escape(result.models[i]) + "," + cell(result.ratings) + "," + cell(result.median) + "," +
           cell(result.lo95) + "," + cell(result.hi95) + "\n";
  }
  return out;
}

}  // namespace mlharness::rank
