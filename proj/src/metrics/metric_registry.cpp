#include "mlharness/metrics/metric_registry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "mlharness/errors.hpp"
#include "mlharness/metrics/builtin.hpp"

namespace mlharness::metrics {

namespace {

constexpr std::size_t kMaxExamples = 5;

double param_number(const MetricParams& params, const std::string& name) {
  return *parse_double(params.at(name));
}

std::vector<std::vector<std::string>> tokenised(const Column& column) {
  std::vector<std::vector<std::string>> out;
  out.reserve(column.values.size());
  for (const std::string& cell : column.values) out.push_back(split_whitespace(cell));
  return out;
}

const Column& single_value_column(const SubmissionTable& t, const std::string& metric) {
  if (t.value_columns().size() != 1) {
    throw DegenerateInput(metric + " expects exactly one prediction column");
  }
  return t.value_columns().front();
}

std::vector<std::vector<double>> numeric_rows(const SubmissionTable& t) {
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < t.value_columns().size(); ++c) cols.push_back(t.numeric(c));
  std::vector<std::vector<double>> rows(t.row_count(), std::vector<double>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t r = 0; r < t.row_count(); ++r) rows[r][c] = cols[c][r];
  }
  return rows;
}

std::vector<long> ratings(const SubmissionTable& t, const std::string& side) {
  std::vector<long> out;
  for (double v : t.numeric_flat()) {
    if (v != std::round(v)) {
      throw DegenerateInput("quadratic_weighted_kappa " + side + " ratings must be integers");
    }
    out.push_back(static_cast<long>(v));
  }
  return out;
}

using Vec = std::span<const double>;

MetricDefinition numeric_pair(std::string name, Direction direction,
                              double (*fn)(Vec, Vec),
                              std::optional<ValueRange> range = std::nullopt) {
  MetricDefinition def;
  def.name = std::move(name);
  def.direction = direction;
  def.prediction_range = range;
  def.score = [fn](const SubmissionTable& answers, const SubmissionTable& sub,
                   const MetricParams&) {
    const auto truth = answers.numeric_flat();
    const auto pred = sub.numeric_flat();
    return fn(truth, pred);
  };
  return def;
}

std::vector<MetricDefinition> builtin_definitions() {
  constexpr auto kHigher = Direction::HigherBetter;
  constexpr auto kLower = Direction::LowerBetter;
  constexpr ValueRange kUnit{0.0, 1.0};
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<MetricDefinition> defs;

  MetricDefinition acc;
  acc.name = "accuracy";
  acc.direction = kHigher;
  acc.value_kind = ValueKind::Text;
  acc.score = [](const SubmissionTable& answers, const SubmissionTable& sub, const MetricParams&) {
    const auto truth = answers.text_flat();
    const auto pred = sub.text_flat();
    return accuracy(truth, pred);
  };
  defs.push_back(std::move(acc));

  defs.push_back(numeric_pair("rmse", kLower, &rmse));
  defs.push_back(numeric_pair("rmsle", kLower, &rmsle, ValueRange{0.0, kInf}));
  defs.push_back(numeric_pair("mae", kLower, &mae));
  defs.push_back(numeric_pair("mse", kLower, &mse));
  defs.push_back(numeric_pair("log_loss", kLower, &log_loss, kUnit));

  MetricDefinition mll;
  mll.name = "multiclass_log_loss";
  mll.direction = kLower;
  mll.prediction_range = kUnit;
  mll.score = [](const SubmissionTable& answers, const SubmissionTable& sub, const MetricParams&) {
    return multiclass_log_loss(numeric_rows(answers), numeric_rows(sub));
  };
  defs.push_back(std::move(mll));

  defs.push_back(numeric_pair("roc_auc", kHigher, &roc_auc, kUnit));

  MetricDefinition mcauc;
  mcauc.name = "mean_columnwise_roc_auc";
  mcauc.direction = kHigher;
  mcauc.prediction_range = kUnit;
  mcauc.score = [](const SubmissionTable& answers, const SubmissionTable& sub,
                   const MetricParams&) {
    if (answers.value_columns().empty()) throw DegenerateInput("no target columns");
    double sum = 0.0;
    for (std::size_t c = 0; c < answers.value_columns().size(); ++c) {
      const auto truth = answers.numeric(c);
      const auto pred = sub.numeric(c);
      sum += roc_auc(truth, pred);
    }
    return sum / static_cast<double>(answers.value_columns().size());
  };
  defs.push_back(std::move(mcauc));

  MetricDefinition fb;
  fb.name = "f_beta";
  fb.direction = kHigher;
  fb.value_kind = ValueKind::Text;
  fb.params = {
      {"beta", ParamSpec::Kind::Number, "1", 0.0, {}, true},
      {"average", ParamSpec::Kind::Choice, "macro", std::nullopt, {"macro", "micro", "binary"}},
      {"positive_label", ParamSpec::Kind::Choice, "1", std::nullopt, {}},
  };
  fb.score = [](const SubmissionTable& answers, const SubmissionTable& sub,
                const MetricParams& params) {
    const std::string& avg = params.at("average");
    const FbetaAverage mode = avg == "micro"    ? FbetaAverage::Micro
                              : avg == "binary" ? FbetaAverage::Binary
                                                : FbetaAverage::Macro;
    const auto truth = answers.text_flat();
    const auto pred = sub.text_flat();
    return f_beta(truth, pred, param_number(params, "beta"), mode, params.at("positive_label"));
  };
  defs.push_back(std::move(fb));

  MetricDefinition map;
  map.name = "map_at_k";
  map.direction = kHigher;
  map.value_kind = ValueKind::Text;
  map.params = {{"k", ParamSpec::Kind::Integer, "5", 1.0, {}}};
  map.score = [](const SubmissionTable& answers, const SubmissionTable& sub,
                 const MetricParams& params) {
    const auto k = static_cast<std::size_t>(param_number(params, "k"));
    return map_at_k(tokenised(single_value_column(answers, "map_at_k")),
                    tokenised(single_value_column(sub, "map_at_k")), k);
  };
  defs.push_back(std::move(map));

  defs.push_back(numeric_pair("smape", kLower, &smape));

  MetricDefinition qwk;
  qwk.name = "quadratic_weighted_kappa";
  qwk.direction = kHigher;
  qwk.params = {
      {"min_rating", ParamSpec::Kind::Integer, std::nullopt, std::nullopt, {}},
      {"max_rating", ParamSpec::Kind::Integer, std::nullopt, std::nullopt, {}},
  };
  qwk.score = [](const SubmissionTable& answers, const SubmissionTable& sub,
                 const MetricParams& params) {
    const auto truth = ratings(answers, "truth");
    const auto pred = ratings(sub, "predicted");
    if (truth.empty()) throw DegenerateInput("metric needs at least one row");
    long lo = std::min(*std::min_element(truth.begin(), truth.end()),
                       *std::min_element(pred.begin(), pred.end()));
    long hi = std::max(*std::max_element(truth.begin(), truth.end()),
                       *std::max_element(pred.begin(), pred.end()));
    if (params.count("min_rating")) lo = static_cast<long>(param_number(params, "min_rating"));
    if (params.count("max_rating")) hi = static_cast<long>(param_number(params, "max_rating"));
    return quadratic_weighted_kappa(truth, pred, lo, hi);
  };
  defs.push_back(std::move(qwk));

  defs.push_back(numeric_pair("normalized_gini", kHigher, &normalized_gini));
  return defs;
}

}  // namespace

MetricRegistry& MetricRegistry::global() {
  static MetricRegistry registry = with_builtins();
  return registry;
}

MetricRegistry MetricRegistry::with_builtins() {
  MetricRegistry r;
  register_builtins(r);
  return r;
}

MetricRegistry::MetricRegistry(const MetricRegistry& other) {
  std::shared_lock lock(other.mutex_);
  definitions_ = other.definitions_;
}

MetricRegistry& MetricRegistry::operator=(const MetricRegistry& other) {
  if (this != &other) {
    std::vector<MetricDefinition> copy;
    {
      std::shared_lock lock(other.mutex_);
      copy = other.definitions_;
    }
    std::unique_lock lock(mutex_);
    definitions_ = std::move(copy);
  }
  return *this;
}

void MetricRegistry::register_metric(MetricDefinition definition) {
  if (definition.name.empty() || !definition.score) {
    throw InvalidArgument("metric needs a name and a scoring function");
  }
  std::unique_lock lock(mutex_);
  for (const auto& d : definitions_) {
    if (d.name == definition.name) {
      throw DuplicateName("metric '" + definition.name + "' is already registered");
    }
  }
  definitions_.push_back(std::move(definition));
}

bool MetricRegistry::contains(const std::string& name) const {
  std::shared_lock lock(mutex_);
  return std::any_of(definitions_.begin(), definitions_.end(),
                     [&](const MetricDefinition& d) { return d.name == name; });
}

MetricDefinition MetricRegistry::get(const std::string& name) const {
  std::shared_lock lock(mutex_);
  for (const auto& d : definitions_) {
    if (d.name == name) return d;
  }
  throw MetricUnknown("metric '" + name + "' is not registered");
}

std::vector<std::string> MetricRegistry::names() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& d : definitions_) out.push_back(d.name);
  return out;
}

MetricParams MetricRegistry::resolve_params(const std::string& name,
                                            const MetricParams& raw) const {
  const MetricDefinition def = get(name);
  MetricParams out;
  for (const auto& [key, value] : raw) {
    const auto it = std::find_if(def.params.begin(), def.params.end(),
                                 [&](const ParamSpec& p) { return p.name == key; });
    if (it == def.params.end()) {
      throw InvalidArgument("metric '" + name + "' has no parameter '" + key + "'");
    }
  }
  for (const ParamSpec& spec : def.params) {
    const auto it = raw.find(spec.name);
    std::optional<std::string> value;
    if (it != raw.end()) {
      value = trim(it->second);
    } else if (spec.default_value) {
      value = *spec.default_value;
    }
    if (!value) continue;
    switch (spec.kind) {
      case ParamSpec::Kind::Number:
      case ParamSpec::Kind::Integer: {
        const auto v = parse_double(*value);
        if (!v || !std::isfinite(*v)) {
          throw InvalidArgument("parameter '" + spec.name + "' must be numeric");
        }
        if (spec.kind == ParamSpec::Kind::Integer && *v != std::round(*v)) {
          throw InvalidArgument("parameter '" + spec.name + "' must be an integer");
        }
        if (spec.min && (*v < *spec.min || (spec.min_exclusive && *v == *spec.min))) {
          throw InvalidArgument("parameter '" + spec.name + "' is out of range");
        }
        break;
      }
      case ParamSpec::Kind::Choice:
        if (!spec.choices.empty() &&
            std::find(spec.choices.begin(), spec.choices.end(), *value) == spec.choices.end()) {
          throw InvalidArgument("parameter '" + spec.name + "' must be one of " +
                                join(spec.choices, ", "));
        }
        break;
    }
    out[spec.name] = *value;
  }
  return out;
}

std::vector<std::string> builtin_metrics() {
  std::vector<std::string> out;
  for (const auto& d : builtin_definitions()) out.push_back(d.name);
  return out;
}

void register_builtins(MetricRegistry& registry) {
  for (auto& def : builtin_definitions()) registry.register_metric(std::move(def));
}

FormatReport validate_submission(const SubmissionTable& submission,
                                 const SubmissionTable& answers, const MetricSpec& metric,
                                 const MetricRegistry& registry) {
  const MetricDefinition def = registry.get(metric.name);
  FormatReport report;

  // Columns, compared as sets.
  const auto expected = answers.column_names();
  const auto actual = submission.column_names();
  const std::set<std::string> expected_set(expected.begin(), expected.end());
  const std::set<std::string> actual_set(actual.begin(), actual.end());
  for (const std::string& name : expected) {
    if (!actual_set.count(name)) {
      report.add(ProblemCode::MissingColumn, "missing column '" + name + "'");
    }
  }
  for (const std::string& name : actual) {
    if (!expected_set.count(name)) {
      report.add(ProblemCode::ExtraColumn, "unexpected column '" + name + "'");
    }
  }

  if (submission.row_count() != answers.row_count()) {
    report.add(ProblemCode::RowCountMismatch,
               "expected " + std::to_string(answers.row_count()) + " rows, found " +
                   std::to_string(submission.row_count()));
  }

  const Column* sub_id = submission.find(answers.id_column().name);
  if (sub_id) {
    std::unordered_set<std::string> seen;
    std::vector<std::string> dups;
    for (const std::string& id : sub_id->values) {
      if (!seen.insert(id).second) dups.push_back(id);
    }
    if (!dups.empty()) {
      std::vector<std::string> shown(dups.begin(),
                                     dups.begin() + std::min(dups.size(), kMaxExamples));
      report.add(ProblemCode::DuplicateId, std::to_string(dups.size()) +
                                               " duplicated id(s), e.g. " + join(shown, ", "));
    }

    const std::unordered_set<std::string> known(answers.id_column().values.begin(),
                                                answers.id_column().values.end());
    std::vector<std::string> unknown;
    for (const std::string& id : seen) {
      if (!known.count(id)) unknown.push_back(id);
    }
    std::sort(unknown.begin(), unknown.end());
    if (!unknown.empty()) {
      std::vector<std::string> shown(unknown.begin(),
                                     unknown.begin() + std::min(unknown.size(), kMaxExamples));
      report.add(ProblemCode::UnknownId, std::to_string(unknown.size()) +
                                             " id(s) not in the answer key, e.g. " +
                                             join(shown, ", "));
    }
  }

  if (def.value_kind == ValueKind::Numeric) {
    for (const Column& answer_col : answers.value_columns()) {
      const Column* col = submission.find(answer_col.name);
      if (!col || col == sub_id) continue;
      std::size_t non_numeric = 0;
      std::size_t out_of_range = 0;
      std::string first_bad;
      std::string first_out;
      for (std::size_t r = 0; r < col->values.size(); ++r) {
        const auto v = parse_double(col->values[r]);
        if (!v || !std::isfinite(*v)) {
          if (non_numeric++ == 0) first_bad = col->values[r];
          continue;
        }
        if (def.prediction_range &&
            (*v < def.prediction_range->lo || *v > def.prediction_range->hi)) {
          if (out_of_range++ == 0) first_out = col->values[r];
        }
      }
      if (non_numeric) {
        report.add(ProblemCode::NonNumeric, "column '" + col->name + "' has " +
                                                std::to_string(non_numeric) +
                                                " non-numeric value(s), e.g. '" + first_bad + "'");
      }
      if (out_of_range) {
        report.add(ProblemCode::OutOfRange,
                   "column '" + col->name + "' has " + std::to_string(out_of_range) +
                       " value(s) outside [" + format_roundtrip(def.prediction_range->lo) + ", " +
                       format_roundtrip(def.prediction_range->hi) + "], e.g. " + first_out);
      }
    }
  }
  return report;
}

EvalResult evaluate(const MetricSpec& metric, const SubmissionTable& submission,
                    const SubmissionTable& answers, const MetricRegistry& registry) {
  const MetricDefinition def = registry.get(metric.name);
  const MetricParams params = registry.resolve_params(metric.name, metric.params);

  std::vector<std::string> value_names;
  for (const Column& c : answers.value_columns()) value_names.push_back(c.name);

  // Re-key the submission on the answer table's id column name.
  const Column* sub_id = submission.find(answers.id_column().name);
  if (!sub_id) throw InvalidArgument("submission lacks id column '" + answers.id_column().name + "'");
  std::vector<Column> cols;
  for (const Column& c : submission.value_columns()) {
    if (&c != sub_id) cols.push_back(c);
  }
  if (sub_id != &submission.id_column()) cols.push_back(submission.id_column());
  const SubmissionTable keyed(*sub_id, std::move(cols));
  if (keyed.row_count() != answers.row_count()) {
    throw InvalidArgument("submission row count differs from the answer key");
  }

  const SubmissionTable aligned = keyed.aligned_to(answers.id_column().values, value_names);
  const double score = def.score(answers, aligned, params);
  if (!std::isfinite(score)) throw DegenerateInput(metric.name + " produced a non-finite score");
  return {score, def.name, def.direction};
}

}  // namespace mlharness::metrics
