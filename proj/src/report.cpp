#include "couplab/report.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "couplab/errors.hpp"

namespace couplab {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::supports: return "supports";
    case Verdict::refutes: return "refutes";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::supports: return 0;
    case Verdict::refutes: return 2;
    case Verdict::inconclusive: return 3;
  }
  return 3;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ConvergenceReport::Cell cell(double v) { return format_number(v); }
ConvergenceReport::Cell cell(std::size_t v) { return std::to_string(v); }
ConvergenceReport::Cell cell(std::string v) { return v; }

void ConvergenceReport::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw InputError("report: row width does not match the header");
  rows.push_back(std::move(row));
}

double ConvergenceReport::statistic(std::string_view name) const {
  for (const auto& [key, value] : statistics) {
    if (key == name) return value;
  }
  throw InputError("report: no statistic named '" + std::string(name) + "'");
}

namespace {

void write_csv_cell(std::ostream& out, const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) {
    out << text;
    return;
  }
  out << '"';
  for (char c : text) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

void ConvergenceReport::write_csv(std::ostream& out) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out << ',';
    write_csv_cell(out, columns[c]);
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      write_csv_cell(out, row[c]);
    }
    out << '\n';
  }
}

std::string ConvergenceReport::summary() const {
  std::ostringstream os;
  os << "quantity: " << quantity << '\n';
  os << "hypothesis: " << hypothesis << '\n';
  os << "verdict: " << to_string(verdict) << '\n';
  os << "margin: " << format_number(margin) << '\n';
  for (const auto& [key, value] : tolerances) os << "tolerance " << key << ": " << format_number(value) << '\n';
  for (const auto& [key, value] : statistics) os << "statistic " << key << ": " << format_number(value) << '\n';
  for (const auto& note : notes) os << "note: " << note << '\n';
  return os.str();
}

void write_series(std::ostream& out, const Series& s) {
  if (s.x.size() != s.y.size()) throw InputError("series '" + s.name + "': x and y differ in length");
  out << "# " << s.x_label << ' ' << s.y_label << '\n';
  for (std::size_t i = 0; i < s.x.size(); ++i) out << format_number(s.x[i]) << ' ' << format_number(s.y[i]) << '\n';
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace couplab
