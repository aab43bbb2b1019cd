#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace couplab {

enum class Verdict { supports, refutes, inconclusive };

std::string_view to_string(Verdict v);

// Exit status of a run that ends with the verdict: 0, 2 or 3.
int exit_code(Verdict v);

// Shortest decimal text that reads back to the same double; the same bits
// always give the same text.
std::string format_number(double v);

// A two-column series for external plotting.
struct Series {
  std::string name;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;
  std::vector<double> y;
};

// Outcome of a numerical hypothesis check. `rows` hold one grid cell each,
// aligned with `columns`; text cells are kept verbatim and numbers go
// through format_number, so equal reports serialize to equal bytes.
struct ConvergenceReport {
  using Cell = std::string;

  std::string quantity;
  std::string hypothesis;
  Verdict verdict = Verdict::inconclusive;
  double margin = 0.0;  // signed distance of the deciding statistic from its threshold
  std::vector<std::pair<std::string, double>> tolerances;
  std::vector<std::pair<std::string, double>> statistics;
  std::vector<std::string> notes;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<Series> series;

  void add_row(std::vector<Cell> row);
  double statistic(std::string_view name) const;  // throws InputError when absent
  void write_csv(std::ostream& out) const;
  std::string summary() const;
};

ConvergenceReport::Cell cell(double v);
ConvergenceReport::Cell cell(std::size_t v);
ConvergenceReport::Cell cell(std::string v);

// "# x_label y_label" header followed by one "x y" line per point.
void write_series(std::ostream& out, const Series& s);

// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace couplab
