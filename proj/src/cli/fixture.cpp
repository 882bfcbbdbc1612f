#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "mlharness/cli/cli.hpp"
#include "mlharness/common.hpp"
#include "mlharness/csv.hpp"
#include "mlharness/errors.hpp"
#include "mlharness/metrics/metric_registry.hpp"
#include "mlharness/metrics/submission.hpp"

namespace mlharness::cli {

namespace {

constexpr double kNoise = 0.5;

struct Row {
  std::string id;
  double x1 = 0.0;
  double x2 = 0.0;
  double noise = 0.0;
  double signal() const { return 3.0 * x1 - 2.0 * x2; }
};

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

long bin_of(double v) { return std::clamp(static_cast<long>(std::floor(v / 2.0 + 2.5)), 0L, 4L); }

std::string fixed6(double v) { return format_fixed(v, 6); }

struct Family {
  std::vector<std::string> columns;
  std::function<std::vector<std::string>(const Row&)> truth;
  std::function<std::vector<std::string>(const Row&)> predict;
  std::vector<std::string> sample;
  // Python expression list over s, x1, x2 producing the prediction cells.
  std::string python_predict;
  std::string target_note;
  std::vector<std::pair<std::string, std::string>> params;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

Family regression(double offset) {
  Family f;
  f.columns = {"target"};
  const bool positive = offset > 0.0;
  f.truth = [=](const Row& r) {
    double y = offset + r.signal() + r.noise;
    if (positive) y = std::max(0.0, y);
    return std::vector<std::string>{fixed6(y)};
  };
  f.predict = [=](const Row& r) {
    double y = offset + r.signal();
    if (positive) y = std::max(0.0, y);
    return std::vector<std::string>{format_roundtrip(y)};
  };
  f.sample = {positive ? "20.0" : "0.0"};
  f.python_predict = positive ? "[repr(max(0.0, " + format_fixed(offset, 1) + " + s))]" : "[repr(s)]";
  f.target_note = "target is a real number";
  return f;
}

Family binary_probability() {
  Family f;
  f.columns = {"target"};
  f.truth = [](const Row& r) { return std::vector<std::string>{r.signal() + r.noise > 0.0 ? "1" : "0"}; };
  f.predict = [](const Row& r) { return std::vector<std::string>{format_roundtrip(sigmoid(2.0 * r.signal()))}; };
  f.sample = {"0.5"};
  f.python_predict = "[repr(1.0 / (1.0 + math.exp(-2.0 * s)))]";
  f.target_note = "target is 0 or 1; submit the probability of 1";
  f.lo = 0.0;
  f.hi = 1.0;
  return f;
}

Family binary_label() {
  Family f;
  f.columns = {"target"};
  f.truth = [](const Row& r) { return std::vector<std::string>{r.signal() + r.noise > 0.0 ? "1" : "0"}; };
  f.predict = [](const Row& r) { return std::vector<std::string>{r.signal() > 0.0 ? "1" : "0"}; };
  f.sample = {"0"};
  f.python_predict = "['1' if s > 0.0 else '0']";
  f.target_note = "target is the label 0 or 1";
  f.lo = 0.0;
  f.hi = 1.0;
  return f;
}

long three_class(double v) { return v < -1.0 ? 0 : (v < 1.0 ? 1 : 2); }

Family multiclass() {
  Family f;
  f.columns = {"class_0", "class_1", "class_2"};
  f.truth = [](const Row& r) {
    const long c = three_class(r.signal() + r.noise);
    std::vector<std::string> out;
    for (long i = 0; i < 3; ++i) out.push_back(i == c ? "1" : "0");
    return out;
  };
  f.predict = [](const Row& r) {
    const long c = three_class(r.signal());
    std::vector<std::string> out;
    for (long i = 0; i < 3; ++i) out.push_back(i == c ? "0.8" : "0.1");
    return out;
  };
  f.sample = {"0.333333", "0.333333", "0.333334"};
  f.python_predict =
      "['0.8' if c == k else '0.1' for c in [0 if s < -1.0 else (1 if s < 1.0 else 2)] for k in range(3)]";
  f.target_note = "one of three classes; submit one probability per class";
  f.lo = 0.0;
  return f;
}

Family two_targets() {
  Family f;
  f.columns = {"target_a", "target_b"};
  f.truth = [](const Row& r) {
    return std::vector<std::string>{r.signal() + r.noise > 0.0 ? "1" : "0",
                                    r.x1 + r.x2 + r.noise > 0.0 ? "1" : "0"};
  };
  f.predict = [](const Row& r) {
    return std::vector<std::string>{format_roundtrip(sigmoid(2.0 * r.signal())),
                                    format_roundtrip(sigmoid(2.0 * (r.x1 + r.x2)))};
  };
  f.sample = {"0.5", "0.5"};
  f.python_predict = "[repr(1.0 / (1.0 + math.exp(-2.0 * s))), repr(1.0 / (1.0 + math.exp(-2.0 * (x1 + x2))))]";
  f.target_note = "two binary targets; submit a probability for each";
  f.lo = 0.0;
  f.hi = 1.0;
  return f;
}

Family ranking() {
  Family f;
  f.columns = {"label"};
  f.truth = [](const Row& r) { return std::vector<std::string>{"c" + std::to_string(bin_of(r.signal() + r.noise))}; };
  f.predict = [](const Row& r) {
    const long p = bin_of(r.signal());
    std::vector<long> order = {0, 1, 2, 3, 4};
    std::stable_sort(order.begin(), order.end(),
                     [&](long a, long b) { return std::labs(a - p) < std::labs(b - p); });
    std::vector<std::string> tokens;
    for (long c : order) tokens.push_back("c" + std::to_string(c));
    return std::vector<std::string>{join(tokens, " ")};
  };
  f.sample = {"c0 c1 c2 c3 c4"};
  f.python_predict =
      "[' '.join('c%d' % c for c in sorted(range(5), key=lambda c: (abs(c - min(4, max(0, "
      "math.floor(s / 2.0 + 2.5)))), c)))]";
  f.target_note = "label is one of c0..c4; submit space-separated labels, best guess first";
  f.lo = 0.0;
  f.hi = 1.0;
  return f;
}

Family rating() {
  Family f;
  f.columns = {"rating"};
  f.truth = [](const Row& r) { return std::vector<std::string>{std::to_string(bin_of(r.signal() + r.noise))}; };
  f.predict = [](const Row& r) { return std::vector<std::string>{std::to_string(bin_of(r.signal()))}; };
  f.sample = {"2"};
  f.python_predict = "[str(min(4, max(0, math.floor(s / 2.0 + 2.5))))]";
  f.target_note = "rating is an integer from 0 to 4";
  f.params = {{"min_rating", "0"}, {"max_rating", "4"}};
  f.lo = -1.0;
  f.hi = 1.0;
  return f;
}

Family family_for(const std::string& metric) {
  if (metric == "rmse" || metric == "mae" || metric == "mse") return regression(0.0);
  if (metric == "rmsle" || metric == "smape") return regression(20.0);
  if (metric == "normalized_gini") {
    Family f = regression(0.0);
    f.lo = -1.0;
    f.hi = 1.0;
    return f;
  }
  if (metric == "log_loss") {
    Family f = binary_probability();
    f.hi = std::numeric_limits<double>::infinity();
    return f;
  }
  if (metric == "roc_auc") return binary_probability();
  if (metric == "accuracy" || metric == "f_beta") return binary_label();
  if (metric == "multiclass_log_loss") return multiclass();
  if (metric == "mean_columnwise_roc_auc") return two_targets();
  if (metric == "map_at_k") return ranking();
  if (metric == "quadratic_weighted_kappa") return rating();
  throw InvalidArgument("no fixture generator for metric '" + metric + "'");
}

std::vector<Row> make_rows(SeededRng& rng, std::size_t n, std::size_t first_id) {
  std::vector<Row> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].id = std::to_string(first_id + i);
    // Parsed back from their text so every consumer sees identical values.
    rows[i].x1 = *parse_double(fixed6(rng.normal()));
    rows[i].x2 = *parse_double(fixed6(rng.normal()));
    rows[i].noise = kNoise * rng.normal();
  }
  return rows;
}

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out = csv_line(header);
  for (const auto& r : rows) out += csv_line(r);
  return out;
}

std::vector<std::string> with_id(const std::string& id, std::vector<std::string> cells) {
  cells.insert(cells.begin(), id);
  return cells;
}

std::string solution_code(const Family& f) {
  std::ostringstream py;
  py << "import csv\nimport math\nimport os\n\n"
     << "inp = os.environ.get(\"MLH_INPUT_DIR\", \"input\")\n"
     << "out = os.environ.get(\"MLH_OUTPUT_DIR\", \"output\")\n"
     << "with open(os.path.join(inp, \"test.csv\"), newline=\"\") as f:\n"
     << "    rows = list(csv.DictReader(f))\n"
     << "os.makedirs(out, exist_ok=True)\n"
     << "with open(os.path.join(out, \"submission.csv\"), \"w\", newline=\"\") as f:\n"
     << "    w = csv.writer(f, lineterminator=\"\\n\")\n"
     << "    w.writerow([\"id\"";
  for (const auto& c : f.columns) py << ", \"" << c << "\"";
  py << "])\n"
     << "    for r in rows:\n"
     << "        x1 = float(r[\"x1\"])\n"
     << "        x2 = float(r[\"x2\"])\n"
     << "        s = 3.0 * x1 - 2.0 * x2\n"
     << "        w.writerow([r[\"id\"]] + " << f.python_predict << ")\n"
     << "print(len(rows), \"predictions written\")\n";
  return py.str();
}

std::string description(const std::string& slug, const std::string& metric, Direction dir, const Family& f,
                        std::size_t n_train, std::size_t n_test) {
  std::ostringstream d;
  d << "# " << slug << "\n\n"
    << "Predict the target for every row of test.csv from the features x1 and x2.\n\n"
    << "## Files\n"
    << "- train.csv: " << n_train << " rows with id, x1, x2 and " << join(f.columns, ", ") << "\n"
    << "- test.csv: " << n_test << " rows with id, x1, x2\n"
    << "- sample_submission.csv: the expected submission format\n\n"
    << "## Target\n" << f.target_note << ".\n\n"
    << "## Evaluation\n"
    << "Submissions are scored with " << metric << " ("
    << (dir == Direction::HigherBetter ? "higher" : "lower") << " is better).\n\n"
    << "## Submission\n"
    << "Write submission.csv with the header id," << join(f.columns, ",") << " and one row per test id.\n";
  return d.str();
}

std::string board(SeededRng& rng, std::size_t n, double reference, const Family& f) {
  const double spread = std::max(0.25 * std::fabs(reference), 0.02);
  std::string out = "score\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::clamp(reference + spread * rng.normal(), f.lo, f.hi);
    out += format_fixed(v, 5) + "\n";
  }
  return out;
}

}  // namespace

FixtureInfo generate_fixture_competition(const fs::path& parent, std::uint64_t seed, const FixtureSpec& spec) {
  const auto definition = metrics::MetricRegistry::global().get(spec.metric);
  if (spec.n_train < 2 || spec.n_test < 2) throw InvalidArgument("fixture needs at least 2 train and 2 test rows");
  if (spec.public_size == 0 && spec.private_size == 0) throw InvalidArgument("fixture needs at least one leaderboard");
  const Family f = family_for(spec.metric);

  FixtureInfo info;
  info.slug = spec.slug.empty() ? "synthetic-" + spec.metric + "-" + std::to_string(seed) : spec.slug;
  info.root = parent / info.slug;
  std::error_code ec;
  if (fs::exists(info.root, ec) && !fs::is_empty(info.root, ec)) {
    throw IoError("fixture target exists and is not empty: " + info.root.string());
  }
  fs::create_directories(info.root / registry::layout::kPublicDir, ec);
  fs::create_directories(info.root / registry::layout::kPrivateDir, ec);
  fs::create_directories(info.root / "reference", ec);
  if (ec) throw IoError("cannot create " + info.root.string() + ": " + ec.message());

  SeededRng rng(seed);
  const auto train = make_rows(rng, spec.n_train, 1);
  const auto test = make_rows(rng, spec.n_test, spec.n_train + 1);

  std::vector<std::string> train_header = {"id", "x1", "x2"};
  train_header.insert(train_header.end(), f.columns.begin(), f.columns.end());
  std::vector<std::vector<std::string>> train_rows, test_rows, answer_rows, sample_rows, reference_rows;
  for (const auto& r : train) {
    auto cells = f.truth(r);
    cells.insert(cells.begin(), {r.id, fixed6(r.x1), fixed6(r.x2)});
    train_rows.push_back(std::move(cells));
  }
  for (const auto& r : test) {
    test_rows.push_back({r.id, fixed6(r.x1), fixed6(r.x2)});
    answer_rows.push_back(with_id(r.id, f.truth(r)));
    sample_rows.push_back(with_id(r.id, f.sample));
    reference_rows.push_back(with_id(r.id, f.predict(r)));
  }
  const std::vector<std::string> sub_header = with_id("id", f.columns);
  const std::string answers_csv = table(sub_header, answer_rows);

  metrics::MetricSpec metric{spec.metric, {}, definition.direction};
  metrics::MetricParams raw_params(f.params.begin(), f.params.end());
  metric.params = metrics::MetricRegistry::global().resolve_params(spec.metric, raw_params);
  const auto answers = metrics::SubmissionTable::from_csv(parse_csv(answers_csv));
  const auto reference = metrics::SubmissionTable::from_csv(parse_csv(table(sub_header, reference_rows)));
  info.reference_score = metrics::evaluate(metric, reference, answers).raw_score;
  info.solution_code = solution_code(f);

  const fs::path pub = info.root / registry::layout::kPublicDir;
  write_file((pub / "train.csv").string(), table(train_header, train_rows));
  write_file((pub / "test.csv").string(), table({"id", "x1", "x2"}, test_rows));
  write_file((info.root / registry::layout::kSampleSubmission).string(), table(sub_header, sample_rows));
  write_file((info.root / registry::layout::kDescription).string(),
             description(info.slug, spec.metric, definition.direction, f, spec.n_train, spec.n_test));
  write_file((info.root / registry::layout::kAnswers).string(), answers_csv);
  if (spec.public_size > 0) {
    write_file((info.root / registry::layout::kPublicLeaderboard).string(),
               board(rng, spec.public_size, info.reference_score, f));
  }
  if (spec.private_size > 0) {
    write_file((info.root / registry::layout::kPrivateLeaderboard).string(),
               board(rng, spec.private_size, info.reference_score, f));
  }

  std::ostringstream manifest;
  manifest << "slug = " << info.slug << "\n"
           << "metric = " << spec.metric << "\n"
           << "categories = " << join(spec.categories, ",") << "\n";
  if (!f.params.empty()) {
    manifest << "\n[params]\n";
    for (const auto& [k, v] : f.params) manifest << k << " = " << v << "\n";
  }
  write_file((info.root / registry::layout::kManifest).string(), manifest.str());
  write_file((info.root / "reference" / "solution.py").string(), info.solution_code);
  return info;
}

}  // namespace mlharness::cli
