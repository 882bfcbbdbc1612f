#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mlharness {

enum class Direction { HigherBetter, LowerBetter };

// "higher_better" / "lower_better" (also accepts "higher", "lower", "max", "min").
std::optional<Direction> parse_direction(std::string_view text);
std::string to_string(Direction d);

// True when `a` is strictly better than `b` under `d`.
inline bool strictly_better(double a, double b, Direction d) {
  return d == Direction::HigherBetter ? a > b : a < b;
}

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with(std::string_view s, std::string_view prefix);

// Strict full-string parse; leading/trailing blanks tolerated.
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// Fixed-precision rendering, e.g. format_fixed(1.4921, 3) == "1.492".
std::string format_fixed(double v, int decimals);
// Shortest text that round-trips through parse_double.
std::string format_roundtrip(double v);

// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view s);

// UTC, ISO-8601 with millisecond precision: 2026-10-14T07:45:00.123Z
std::string utc_timestamp_now();

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// Deterministic generator shared by fixtures and bootstrap resampling.
// std::mt19937_64 is bit-specified by the standard; the helpers below avoid
// the implementation-defined std distributions.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);
  std::uint64_t next();
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace mlharness
