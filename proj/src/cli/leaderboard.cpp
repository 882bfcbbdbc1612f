#include <algorithm>
#include <cstdio>
#include <sstream>

#include "mlharness/cli/cli.hpp"
#include "mlharness/common.hpp"
#include "mlharness/csv.hpp"
#include "mlharness/errors.hpp"

namespace mlharness::cli {

namespace {

std::string printf_number(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::optional<std::size_t> column_of(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == name) return i;
  }
  return std::nullopt;
}

std::string cell_at(const std::vector<std::string>& row, std::size_t i) { return i < row.size() ? trim(row[i]) : ""; }

double number_at(const std::vector<std::string>& row, std::size_t i, const std::string& what, std::size_t line) {
  const auto v = parse_double(cell_at(row, i));
  if (!v) throw Malformed("line " + std::to_string(line) + ": " + what + " is not a number");
  return *v;
}

}  // namespace

std::string render_row(const LeaderboardRow& row) {
  return row.model + " | " + printf_number("%.3f", row.aup) + " | " +
         (row.h_rank ? printf_number("%.2f", *row.h_rank) : std::string("n/a")) + " | " +
         printf_number("%.0f", row.elo);
}

std::string render_tables(const std::vector<LeaderboardTable>& tables) {
  std::ostringstream out;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i) out << "\n";
    out << "## " << tables[i].category << "\n"
        << "model | AUP | H-Rank (%) | Elo\n";
    for (const auto& r : tables[i].rows) out << render_row(r) << "\n";
  }
  return out.str();
}

json tables_to_json(const std::vector<LeaderboardTable>& tables) {
  json out = json::array();
  for (const auto& t : tables) {
    json rows = json::array();
    for (const auto& r : t.rows) {
      rows.push_back({{"model", r.model},
                      {"aup", r.aup},
                      {"h_rank", r.h_rank ? json(*r.h_rank) : json(nullptr)},
                      {"elo", r.elo}});
    }
    out.push_back({{"category", t.category}, {"rows", rows}});
  }
  return out;
}

LeaderboardTable rank_table(const rank::ScoreMatrix& full, const RankOptions& options, const std::string& category) {
  const rank::ScoreMatrix m = full.filter_category(category);
  m.validate();
  LeaderboardTable table;
  table.category = category.empty() ? "Overall" : category;

  const auto ratios = rank::performance_ratios(m, options.epsilon, options.cap);
  const auto profile = rank::aup(ratios, options.aup);

  std::vector<double> elo(m.models.size(), options.elo.offset);
  const auto battles = rank::battles_from_scores(m);
  if (m.models.size() >= 2 && !battles.empty()) {
    elo = rank::bootstrap_ratings(battles, options.elo, m.models).median;
  }

  const bool with_hr = !m.human_ranks.empty();
  for (std::size_t i = 0; i < m.models.size(); ++i) {
    LeaderboardRow row;
    row.model = m.models[i];
    const auto it = std::find(profile.result.models.begin(), profile.result.models.end(), row.model);
    row.aup = profile.result.values.at(static_cast<std::size_t>(it - profile.result.models.begin()));
    if (with_hr) {
      double sum = 0.0;
      for (std::size_t t = 0; t < m.tasks.size(); ++t) {
        sum += m.scores[t][i] ? m.human_ranks[t][i].value_or(0.0) : 0.0;
      }
      row.h_rank = 100.0 * sum / static_cast<double>(m.tasks.size());
    }
    row.elo = elo[i];
    table.rows.push_back(std::move(row));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.elo != b.elo) return a.elo > b.elo;
    return a.model < b.model;
  });
  return table;
}

std::vector<LeaderboardTable> cmd_rank(const rank::ScoreMatrix& matrix, const RankOptions& options) {
  options.elo.validate();
  std::vector<LeaderboardTable> tables;
  for (const auto& c : matrix.all_categories()) tables.push_back(rank_table(matrix, options, c));
  tables.push_back(rank_table(matrix, options, ""));
  return tables;
}

std::vector<LeaderboardTable> read_precomputed_tables(const std::string& csv_text) {
  const auto doc = parse_csv(csv_text);
  if (doc.rows.empty()) throw Malformed("precomputed table is empty");
  const auto& header = doc.rows.front();
  const auto c_model = column_of(header, "model");
  const auto c_aup = column_of(header, "aup");
  const auto c_hr = column_of(header, "h_rank");
  const auto c_elo = column_of(header, "elo");
  const auto c_cat = column_of(header, "category");
  if (!c_model || !c_aup || !c_elo) throw Malformed("precomputed table needs model, aup and elo columns");
  std::vector<LeaderboardTable> tables;
  for (std::size_t r = 1; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    const std::string category = c_cat ? cell_at(row, *c_cat) : "Overall";
    auto it = std::find_if(tables.begin(), tables.end(),
                           [&](const LeaderboardTable& t) { return t.category == category; });
    if (it == tables.end()) {
      tables.push_back({category, {}});
      it = tables.end() - 1;
    }
    LeaderboardRow lr;
    lr.model = cell_at(row, *c_model);
    lr.aup = number_at(row, *c_aup, "aup", r + 1);
    if (c_hr && !cell_at(row, *c_hr).empty()) lr.h_rank = number_at(row, *c_hr, "h_rank", r + 1);
    lr.elo = number_at(row, *c_elo, "elo", r + 1);
    it->rows.push_back(std::move(lr));
  }
  return tables;
}

std::vector<DifficultyRow> cmd_difficulty(const std::string& csv_text) {
  const auto doc = parse_csv(csv_text);
  if (doc.rows.empty()) throw Malformed("difficulty input is empty");
  const auto& header = doc.rows.front();
  std::map<std::string, double> averages;
  std::map<std::string, std::string> categories;

  if (column_of(header, "avg_human_rank")) {
    const std::size_t c_task = column_of(header, "task").value_or(0);
    const std::size_t c_avg = *column_of(header, "avg_human_rank");
    const auto c_cat = column_of(header, "category");
    for (std::size_t r = 1; r < doc.rows.size(); ++r) {
      const auto& row = doc.rows[r];
      if (row.size() == 1 && trim(row[0]).empty()) continue;
      const std::string task = cell_at(row, c_task);
      if (task.empty()) throw Malformed("line " + std::to_string(r + 1) + ": empty task");
      if (!averages.emplace(task, number_at(row, c_avg, "avg_human_rank", r + 1)).second) {
        throw Malformed("duplicate task '" + task + "'");
      }
      if (c_cat) categories[task] = cell_at(row, *c_cat);
    }
  } else {
    const auto m = rank::parse_score_matrix_csv(csv_text);
    if (m.human_ranks.empty()) throw Malformed("score matrix has no human_rank column");
    for (std::size_t t = 0; t < m.tasks.size(); ++t) {
      double sum = 0.0;
      for (std::size_t i = 0; i < m.models.size(); ++i) {
        if (m.scores[t][i]) sum += m.human_ranks[t][i].value_or(0.0);
      }
      averages[m.tasks[t]] = sum / static_cast<double>(m.models.size());
      if (!m.categories.empty()) categories[m.tasks[t]] = join(m.categories[t], ";");
    }
  }
  if (averages.empty()) throw Malformed("difficulty input has no tasks");

  std::vector<DifficultyRow> out;
  for (const auto& [task, value] : rank::difficulty_ranking(averages)) {
    out.push_back({task, value, categories.count(task) ? categories[task] : ""});
  }
  return out;
}

std::string render_difficulty(const std::vector<DifficultyRow>& rows) {
  std::string out = "task | avg HumanRank | category\n";
  for (const auto& r : rows) {
    out += r.task + " | " + format_fixed(r.avg_human_rank, 6) + " | " + r.category + "\n";
  }
  return out;
}

std::string render_violations(const std::vector<registry::LayoutViolation>& violations) {
  std::string out;
  for (const auto& v : violations) {
    out += v.path + ": " + registry::to_string(v.kind) + ": " + v.detail + " (" + v.remedy() + ")\n";
  }
  return out;
}

}  // namespace mlharness::cli
