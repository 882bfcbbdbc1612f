#include <algorithm>
#include <cmath>
#include <set>

#include "mlharness/csv.hpp"
#include "mlharness/errors.hpp"
#include "mlharness/rank/rank.hpp"

namespace mlharness::rank {

namespace {

std::optional<bool> parse_bool(const std::string& s) {
  const std::string t = trim(s);
  if (t == "1" || t == "true" || t == "True" || t == "TRUE" || t == "yes") return true;
  if (t == "0" || t == "false" || t == "False" || t == "FALSE" || t == "no") return false;
  return std::nullopt;
}

std::size_t index_or_append(std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  names.push_back(name);
  return names.size() - 1;
}

}  // namespace

double human_rank(double score, const LeaderboardSnapshot& board) {
  if (board.entries.empty()) throw EmptyLeaderboard("leaderboard has no entries");
  if (!std::isfinite(score)) throw InvalidArgument("score must be finite");
  std::size_t surpassed = 0;
  for (double entry : board.entries) {
    if (strictly_better(score, entry, board.direction)) ++surpassed;
  }
  return static_cast<double>(surpassed) / static_cast<double>(board.entries.size());
}

double combined_reward(double score, const std::optional<LeaderboardSnapshot>& public_board,
                       const std::optional<LeaderboardSnapshot>& private_board) {
  if (!public_board && !private_board) throw EmptyLeaderboard("no leaderboard available");
  if (public_board && private_board) {
    return (human_rank(score, *public_board) + human_rank(score, *private_board)) / 2.0;
  }
  return human_rank(score, public_board ? *public_board : *private_board);
}

void ScoreMatrix::validate() const {
  if (models.empty()) throw InvalidArgument("score matrix has no models");
  if (tasks.empty()) throw InvalidArgument("score matrix has no tasks");
  if (directions.size() != tasks.size() || scores.size() != tasks.size()) {
    throw InvalidArgument("score matrix task dimension mismatch");
  }
  for (const auto& row : scores) {
    if (row.size() != models.size()) throw InvalidArgument("score matrix model dimension mismatch");
    for (const auto& v : row) {
      if (v && !std::isfinite(*v)) throw InvalidArgument("score matrix holds a non-finite score");
    }
  }
  if (!human_ranks.empty()) {
    if (human_ranks.size() != tasks.size()) throw InvalidArgument("human_ranks shape mismatch");
    for (const auto& row : human_ranks) {
      if (row.size() != models.size()) throw InvalidArgument("human_ranks shape mismatch");
    }
  }
  if (!categories.empty() && categories.size() != tasks.size()) {
    throw InvalidArgument("categories shape mismatch");
  }
  if (std::set<std::string>(models.begin(), models.end()).size() != models.size() ||
      std::set<std::string>(tasks.begin(), tasks.end()).size() != tasks.size()) {
    throw InvalidArgument("duplicate model or task identifier");
  }
}

std::size_t ScoreMatrix::model_index(const std::string& model) const {
  const auto it = std::find(models.begin(), models.end(), model);
  if (it == models.end()) throw InvalidArgument("unknown model '" + model + "'");
  return static_cast<std::size_t>(it - models.begin());
}

ScoreMatrix ScoreMatrix::filter_category(const std::string& category) const {
  if (category.empty()) return *this;
  ScoreMatrix out;
  out.models = models;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (categories.empty()) continue;
    const auto& tags = categories[t];
    if (std::find(tags.begin(), tags.end(), category) == tags.end()) continue;
    out.tasks.push_back(tasks[t]);
    out.directions.push_back(directions[t]);
    out.scores.push_back(scores[t]);
    if (!human_ranks.empty()) out.human_ranks.push_back(human_ranks[t]);
    out.categories.push_back(tags);
  }
  return out;
}

std::vector<std::string> ScoreMatrix::all_categories() const {
  std::set<std::string> all;
  for (const auto& tags : categories) all.insert(tags.begin(), tags.end());
  return {all.begin(), all.end()};
}

ScoreMatrix parse_score_matrix_csv(const std::string& text) {
  const CsvDocument doc = parse_csv(text);
  if (doc.rows.empty()) throw Malformed("score matrix file is empty");
  const auto& header = doc.rows.front();
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  const auto c_task = column("task");
  const auto c_model = column("model");
  const auto c_score = column("score");
  const auto c_dir = column("direction");
  const auto c_feasible = column("feasible");
  if (!c_task || !c_model || !c_score || !c_dir || !c_feasible) {
    throw Malformed("score matrix needs columns task, model, score, direction, feasible");
  }
  const auto c_hr = column("human_rank");
  const auto c_cat = column("category");

  struct Cell {
    std::optional<double> score;
    std::optional<double> human_rank;
  };
  ScoreMatrix m;
  std::map<std::pair<std::size_t, std::size_t>, Cell> cells;
  std::map<std::size_t, Direction> dirs;
  std::map<std::size_t, std::vector<std::string>> cats;

  for (std::size_t r = 1; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    auto cell = [&](std::size_t c) { return c < row.size() ? trim(row[c]) : std::string(); };
    const std::string where = "score matrix row " + std::to_string(r + 1);
    const std::string task = cell(*c_task);
    const std::string model = cell(*c_model);
    if (task.empty() || model.empty()) throw Malformed(where + ": empty task or model");
    const auto dir = parse_direction(cell(*c_dir));
    if (!dir) throw Malformed(where + ": bad direction '" + cell(*c_dir) + "'");
    const auto feasible = parse_bool(cell(*c_feasible));
    if (!feasible) throw Malformed(where + ": bad feasible flag");

    const std::size_t t = index_or_append(m.tasks, task);
    const std::size_t mi = index_or_append(m.models, model);
    if (const auto [it, fresh] = dirs.emplace(t, *dir); !fresh && it->second != *dir) {
      throw Malformed(where + ": task '" + task + "' has conflicting directions");
    }
    Cell c;
    if (*feasible) {
      c.score = parse_double(cell(*c_score));
      if (!c.score || !std::isfinite(*c.score)) throw Malformed(where + ": non-numeric score");
    }
    if (c_hr && !cell(*c_hr).empty()) {
      c.human_rank = parse_double(cell(*c_hr));
      if (!c.human_rank) throw Malformed(where + ": non-numeric human_rank");
    }
    if (!cells.emplace(std::pair{t, mi}, c).second) {
      throw Malformed(where + ": duplicate (task, model) cell");
    }
    if (c_cat) {
      auto& tags = cats[t];
      for (const auto& tag : split(cell(*c_cat), ';')) {
        const std::string tt = trim(tag);
        if (!tt.empty() && std::find(tags.begin(), tags.end(), tt) == tags.end()) tags.push_back(tt);
      }
    }
  }
  if (m.tasks.empty()) throw Malformed("score matrix has no rows");

  m.scores.assign(m.tasks.size(), std::vector<std::optional<double>>(m.models.size()));
  if (c_hr) m.human_ranks = m.scores;
  for (const auto& [key, c] : cells) {
    m.scores[key.first][key.second] = c.score;
    if (c_hr) m.human_ranks[key.first][key.second] = c.human_rank;
  }
  for (std::size_t t = 0; t < m.tasks.size(); ++t) m.directions.push_back(dirs.at(t));
  if (c_cat) {
    for (std::size_t t = 0; t < m.tasks.size(); ++t) m.categories.push_back(cats[t]);
  }
  return m;
}

ScoreMatrix read_score_matrix_csv(const std::string& path) {
  return parse_score_matrix_csv(read_file(path));
}

std::string score_matrix_to_csv(const ScoreMatrix& m) {
  m.validate();
  const bool with_hr = !m.human_ranks.empty();
  const bool with_cat = !m.categories.empty();
  std::vector<std::string> header{"task", "model", "score", "direction", "feasible"};
  if (with_hr) header.emplace_back("human_rank");
  if (with_cat) header.emplace_back("category");
  std::string out = csv_line(header);
  for (std::size_t t = 0; t < m.tasks.size(); ++t) {
    for (std::size_t i = 0; i < m.models.size(); ++i) {
      const auto& s = m.scores[t][i];
      std::vector<std::string> row{m.tasks[t], m.models[i], s ? format_roundtrip(*s) : "",
                                   to_string(m.directions[t]), s ? "true" : "false"};
      if (with_hr) {
        const auto& h = m.human_ranks[t][i];
        row.push_back(h ? format_roundtrip(*h) : "");
      }
      if (with_cat) row.push_back(join(m.categories[t], ";"));
      out += csv_line(row);
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> difficulty_ranking(
    const std::map<std::string, double>& avg_human_rank) {
  std::vector<std::pair<std::string, double>> out(avg_human_rank.begin(), avg_human_rank.end());
  for (const auto& [task, v] : out) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument("average HumanRank of '" + task + "' is outside [0, 1]");
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

}  // namespace mlharness::rank
