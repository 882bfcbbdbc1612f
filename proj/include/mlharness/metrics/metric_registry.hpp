#pragma once

#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mlharness/common.hpp"
#include "mlharness/metrics/submission.hpp"

namespace mlharness::metrics {

using MetricParams = std::map<std::string, std::string>;

struct MetricSpec {
  std::string name;
  MetricParams params;
  Direction direction = Direction::HigherBetter;

  bool operator==(const MetricSpec&) const = default;
};

struct ParamSpec {
  enum class Kind { Number, Integer, Choice };

  std::string name;
  Kind kind = Kind::Number;
  std::optional<std::string> default_value;
  std::optional<double> min;
  // Empty means any value is accepted.
  std::vector<std::string> choices;
  bool min_exclusive = false;
};

enum class ValueKind { Numeric, Text };

struct ValueRange {
  double lo;
  double hi;
};

// Scores `aligned` (rows and columns in the answer table's order) against
// `answers`. Params arrive with defaults applied.
using ScoreFn = std::function<double(const SubmissionTable& answers,
                                     const SubmissionTable& aligned,
                                     const MetricParams& params)>;

struct MetricDefinition {
  std::string name;
  Direction direction = Direction::HigherBetter;
  ScoreFn score;
  std::vector<ParamSpec> params;
  ValueKind value_kind = ValueKind::Numeric;
  std::optional<ValueRange> prediction_range;
};

struct EvalResult {
  double raw_score = 0.0;
  std::string metric_name;
  Direction direction = Direction::HigherBetter;
};

class MetricRegistry {
 public:
  MetricRegistry() = default;

  // Process-wide registry, preloaded with the builtins.
  static MetricRegistry& global();
  static MetricRegistry with_builtins();

  MetricRegistry(const MetricRegistry& other);
  MetricRegistry& operator=(const MetricRegistry& other);

  // Throws DuplicateName.
  void register_metric(MetricDefinition definition);

  bool contains(const std::string& name) const;
  // Throws MetricUnknown.
  MetricDefinition get(const std::string& name) const;
  // Registration order.
  std::vector<std::string> names() const;

  // Applies defaults and checks `raw` against the metric's schema; throws
  // MetricUnknown or InvalidArgument.
  MetricParams resolve_params(const std::string& name, const MetricParams& raw) const;

 private:
  mutable std::shared_mutex mutex_;
  std::vector<MetricDefinition> definitions_;
};

// Stable list of the builtin metric identifiers.
std::vector<std::string> builtin_metrics();
void register_builtins(MetricRegistry& registry);

FormatReport validate_submission(const SubmissionTable& submission,
                                 const SubmissionTable& answers,
                                 const MetricSpec& metric,
                                 const MetricRegistry& registry = MetricRegistry::global());

// Rows are joined on id. Throws MetricUnknown, DegenerateInput, or
// InvalidArgument for a submission that would not validate.
EvalResult evaluate(const MetricSpec& metric, const SubmissionTable& submission,
                    const SubmissionTable& answers,
                    const MetricRegistry& registry = MetricRegistry::global());

}  // namespace mlharness::metrics
