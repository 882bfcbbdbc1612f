#include "mlharness/registry/task_registry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "mlharness/csv.hpp"
#include "mlharness/ini.hpp"

namespace mlharness::registry {

namespace {

struct ManifestFields {
  std::string slug;
  metrics::MetricSpec metric;
  std::vector<std::string> categories;
  std::optional<Direction> public_direction;
  std::optional<Direction> private_direction;
  std::optional<std::string> run_command;
  std::optional<std::string> syntax_check_command;
};

std::string join_violations(const std::vector<LayoutViolation>& vs) {
  std::string out = "competition layout is invalid:";
  for (const auto& v : vs) {
    out += "\n  " + to_string(v.kind) + " " + v.path + ": " + v.detail;
  }
  return out;
}

// First line of a CSV file, parsed as a header row.
std::optional<std::vector<std::string>> read_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      const CsvDocument doc = parse_csv(line);
      if (doc.rows.empty()) return std::nullopt;
      std::vector<std::string> cols;
      for (const auto& c : doc.rows.front()) cols.push_back(trim(c));
      return cols;
    }
  }
  return std::nullopt;
}

// Parses the manifest; metric problems are appended to `out`.
std::optional<ManifestFields> read_manifest(const fs::path& root,
                                            const metrics::MetricRegistry& metrics,
                                            std::vector<LayoutViolation>& out,
                                            bool& metric_unknown) {
  const fs::path path = root / layout::kManifest;
  if (!fs::exists(path)) {
    out.push_back({layout::kManifest, ViolationKind::Missing, "manifest file not found"});
    return std::nullopt;
  }
  IniDocument doc;
  try {
    doc = IniDocument::load(path.string());
  } catch (const Malformed& e) {
    out.push_back({layout::kManifest, ViolationKind::Malformed, e.what()});
    return std::nullopt;
  }

  ManifestFields f;
  f.slug = doc.get_or("", "slug", root.filename().string());
  if (f.slug.empty()) f.slug = root.filename().string();

  const auto metric = doc.get("", "metric");
  if (!metric || metric->empty()) {
    out.push_back({layout::kManifest, ViolationKind::Malformed, "no 'metric' key"});
    return std::nullopt;
  }
  f.metric.name = *metric;
  if (!metrics.contains(*metric)) {
    metric_unknown = true;
    out.push_back({layout::kManifest, ViolationKind::Malformed,
                   "metric '" + *metric + "' is not registered"});
    return std::nullopt;
  }
  const auto definition = metrics.get(*metric);
  f.metric.direction = definition.direction;
  if (const auto d = doc.get("", "direction")) {
    const auto parsed = parse_direction(*d);
    if (!parsed) {
      out.push_back({layout::kManifest, ViolationKind::Malformed,
                     "direction must be higher_better or lower_better"});
      return std::nullopt;
    }
    if (*parsed != definition.direction) {
      out.push_back({layout::kManifest, ViolationKind::Inconsistent,
                     "direction " + to_string(*parsed) + " contradicts metric '" + *metric +
                         "' (" + to_string(definition.direction) + ")"});
      return std::nullopt;
    }
  }
  try {
    f.metric.params = metrics.resolve_params(*metric, doc.section("params"));
  } catch (const HarnessError& e) {
    out.push_back({layout::kManifest, ViolationKind::Malformed, e.what()});
    return std::nullopt;
  }

  for (const auto& [key, target] :
       {std::pair{"public_direction", &f.public_direction},
        std::pair{"private_direction", &f.private_direction}}) {
    if (const auto d = doc.get("", key)) {
      const auto parsed = parse_direction(*d);
      if (!parsed) {
        out.push_back({layout::kManifest, ViolationKind::Malformed,
                       std::string(key) + " must be higher_better or lower_better"});
        return std::nullopt;
      }
      *target = parsed;
    }
  }

  for (const std::string& c : split(doc.get_or("", "categories", ""), ',')) {
    const std::string t = trim(c);
    if (!t.empty()) f.categories.push_back(t);
  }
  if (const auto rc = doc.get("", "run_command"); rc && !rc->empty()) f.run_command = rc;
  if (const auto sc = doc.get("", "syntax_check_command"); sc && !sc->empty()) {
    f.syntax_check_command = sc;
  }
  return f;
}

struct Scan {
  std::vector<LayoutViolation> violations;
  bool metric_unknown = false;
  std::optional<CompetitionManifest> manifest;
};

Scan scan(const fs::path& root, const metrics::MetricRegistry& metrics) {
  Scan s;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    if (ec && ec != std::errc::no_such_file_or_directory) {
      throw IoError("cannot read '" + root.string() + "': " + ec.message());
    }
    s.violations.push_back({".", ViolationKind::Missing, "competition root is not a directory"});
    return s;
  }

  CompetitionManifest m;
  m.root = root;
  const auto fields = read_manifest(root, metrics, s.violations, s.metric_unknown);

  const fs::path description = root / layout::kDescription;
  if (!fs::is_regular_file(description)) {
    s.violations.push_back({layout::kDescription, ViolationKind::Missing, "file not found"});
  } else {
    m.description = read_file(description.string());
  }

  const auto sample = read_header(root / layout::kSampleSubmission);
  if (!fs::is_regular_file(root / layout::kSampleSubmission)) {
    s.violations.push_back({layout::kSampleSubmission, ViolationKind::Missing, "file not found"});
  } else if (!sample || sample->empty() || sample->front().empty()) {
    s.violations.push_back({layout::kSampleSubmission, ViolationKind::Malformed, "no header row"});
  } else {
    m.submission_columns = *sample;
  }

  const auto answers = read_header(root / layout::kAnswers);
  if (!fs::is_regular_file(root / layout::kAnswers)) {
    s.violations.push_back({layout::kAnswers, ViolationKind::Missing, "file not found"});
  } else if (!answers || answers->empty() || answers->front().empty()) {
    s.violations.push_back({layout::kAnswers, ViolationKind::Malformed, "no header row"});
  } else if (sample && !sample->empty() &&
             std::set<std::string>(sample->begin(), sample->end()) !=
                 std::set<std::string>(answers->begin(), answers->end())) {
    s.violations.push_back({layout::kAnswers, ViolationKind::Inconsistent,
                            "columns differ from sample_submission.csv"});
  } else if (sample && !sample->empty() && answers->front() != sample->front()) {
    s.violations.push_back({layout::kAnswers, ViolationKind::Inconsistent,
                            "id column differs from sample_submission.csv"});
  }

  const bool has_public = fs::is_regular_file(root / layout::kPublicLeaderboard);
  const bool has_private = fs::is_regular_file(root / layout::kPrivateLeaderboard);
  if (!has_public && !has_private) {
    s.violations.push_back({layout::kAnyLeaderboard, ViolationKind::Missing,
                            "neither a public nor a private leaderboard exists"});
  }
  if (fields) {
    const Direction metric_dir = fields->metric.direction;
    const Direction pub_dir = fields->public_direction.value_or(metric_dir);
    const Direction priv_dir = fields->private_direction.value_or(metric_dir);
    if (has_public && has_private && pub_dir != priv_dir) {
      s.violations.push_back({layout::kAnyLeaderboard, ViolationKind::Inconsistent,
                              "public and private leaderboards declare opposite directions"});
    } else if ((has_public && pub_dir != metric_dir) || (has_private && priv_dir != metric_dir)) {
      s.violations.push_back({layout::kAnyLeaderboard, ViolationKind::Inconsistent,
                              "leaderboard direction contradicts the metric direction"});
    }
    auto load_board = [&](const char* rel, BoardSource src) -> std::optional<LeaderboardSnapshot> {
      try {
        return load_leaderboard(root / rel, metric_dir, src);
      } catch (const Malformed& e) {
        s.violations.push_back({rel, ViolationKind::Malformed, e.what()});
        return std::nullopt;
      }
    };
    if (has_public) m.public_leaderboard = load_board(layout::kPublicLeaderboard, BoardSource::Public);
    if (has_private) {
      m.private_leaderboard = load_board(layout::kPrivateLeaderboard, BoardSource::Private);
    }
  } else {
    // Leaderboards are still checked for well-formedness without a direction.
    for (const auto& [present, rel] : {std::pair{has_public, layout::kPublicLeaderboard},
                                       std::pair{has_private, layout::kPrivateLeaderboard}}) {
      if (!present) continue;
      try {
        load_leaderboard(root / rel, Direction::HigherBetter, BoardSource::Public);
      } catch (const Malformed& e) {
        s.violations.push_back({rel, ViolationKind::Malformed, e.what()});
      }
    }
  }

  if (fields && s.violations.empty()) {
    m.slug = fields->slug;
    m.metric = fields->metric;
    m.categories = fields->categories;
    m.run_command = fields->run_command;
    m.syntax_check_command = fields->syntax_check_command;
    s.manifest = std::move(m);
  }
  return s;
}

void list_tree(const fs::path& dir, std::size_t depth, std::size_t max_depth,
               std::size_t max_entries, std::string& out) {
  std::vector<fs::directory_entry> entries;
  std::error_code ec;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    entries.push_back(*it);
  }
  if (ec) throw IoError("cannot list '" + dir.string() + "': " + ec.message());
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.path().filename() < b.path().filename(); });

  const std::string indent(2 * depth, ' ');
  const std::size_t shown = std::min(entries.size(), max_entries);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& e = entries[i];
    const bool is_dir = e.is_directory();
    out += indent + e.path().filename().string() + (is_dir ? "/" : "") + "\n";
    if (is_dir && depth + 1 < max_depth) {
      list_tree(e.path(), depth + 1, max_depth, max_entries, out);
    }
  }
  if (entries.size() > shown) {
    out += indent + "… (" + std::to_string(entries.size() - shown) + " more)\n";
  }
}

}  // namespace

std::string to_string(BoardSource s) { return s == BoardSource::Public ? "public" : "private"; }

std::string to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::Missing: return "Missing";
    case ViolationKind::Malformed: return "Malformed";
    case ViolationKind::Inconsistent: return "Inconsistent";
  }
  return "Unknown";
}

std::string LayoutViolation::remedy() const {
  switch (kind) {
    case ViolationKind::Missing:
      return "create the file at the listed path of the standard competition layout";
    case ViolationKind::Malformed:
      return "fix the file contents so they parse (CSV header row, numeric scores, "
             "manifest keys)";
    case ViolationKind::Inconsistent:
      return "make the listed files agree (columns, ids, score direction)";
  }
  return "";
}

LayoutError::LayoutError(std::vector<LayoutViolation> violations)
    : HarnessError("LayoutError", join_violations(violations)),
      violations_(std::move(violations)) {}

LeaderboardSnapshot load_leaderboard(const fs::path& path, Direction direction,
                                     BoardSource source) {
  CsvDocument doc;
  try {
    doc = read_csv(path.string());
  } catch (const IoError& e) {
    throw Malformed(e.what());
  }
  if (doc.rows.empty()) throw Malformed("leaderboard '" + path.filename().string() + "' is empty");

  std::size_t column = 0;
  std::size_t first_data = 0;
  const auto& head = doc.rows.front();
  if (!head.empty() && !parse_double(head.front())) {
    first_data = 1;
    for (std::size_t c = 0; c < head.size(); ++c) {
      if (trim(head[c]) == "score") column = c;
    }
  }

  LeaderboardSnapshot board;
  board.direction = direction;
  board.source = source;
  for (std::size_t r = first_data; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    const auto v = column < row.size() ? parse_double(row[column]) : std::nullopt;
    if (!v || !std::isfinite(*v)) {
      throw Malformed("leaderboard '" + path.filename().string() + "' row " +
                      std::to_string(r + 1) + " has a non-numeric score");
    }
    board.entries.push_back(*v);
  }
  if (board.entries.empty()) {
    throw Malformed("leaderboard '" + path.filename().string() + "' has no scores");
  }
  if (direction == Direction::HigherBetter) {
    std::stable_sort(board.entries.begin(), board.entries.end(), std::greater<>());
  } else {
    std::stable_sort(board.entries.begin(), board.entries.end());
  }
  return board;
}

std::vector<LayoutViolation> validate_layout(const fs::path& root,
                                             const metrics::MetricRegistry& metrics) {
  return scan(root, metrics).violations;
}

CompetitionManifest load_competition(const fs::path& root,
                                     const metrics::MetricRegistry& metrics) {
  Scan s = scan(root, metrics);
  if (s.metric_unknown) {
    for (const auto& v : s.violations) {
      if (v.path == layout::kManifest) throw MetricUnknown(v.detail);
    }
  }
  if (!s.violations.empty()) throw LayoutError(std::move(s.violations));
  return std::move(*s.manifest);
}

std::string data_structure_summary(const fs::path& public_dir, std::size_t max_depth,
                                   std::size_t max_entries_per_dir) {
  const fs::path custom = public_dir / "data_structure.txt";
  if (fs::is_regular_file(custom)) return read_file(custom.string());
  if (!fs::is_directory(public_dir)) {
    throw IoError("'" + public_dir.string() + "' is not a readable directory");
  }
  std::string out;
  list_tree(public_dir, 0, std::max<std::size_t>(max_depth, 1), max_entries_per_dir, out);
  return out;
}

RegistryListing list_competitions(const fs::path& registry_root,
                                  const metrics::MetricRegistry& metrics) {
  std::vector<fs::path> children;
  std::error_code ec;
  for (fs::directory_iterator it(registry_root, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->is_directory()) children.push_back(it->path());
  }
  if (ec) throw IoError("cannot list '" + registry_root.string() + "': " + ec.message());

  RegistryListing listing;
  for (const fs::path& child : children) {
    Scan s = scan(child, metrics);
    if (s.manifest) {
      listing.competitions.push_back(std::move(*s.manifest));
    } else {
      listing.failures.push_back({child.filename().string(), std::move(s.violations)});
    }
  }
  std::sort(listing.competitions.begin(), listing.competitions.end(),
            [](const auto& a, const auto& b) { return a.slug < b.slug; });
  std::sort(listing.failures.begin(), listing.failures.end(),
            [](const auto& a, const auto& b) { return a.slug < b.slug; });
  return listing;
}

}  // namespace mlharness::registry
