#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dnpi {

enum class Gender { M, F };
enum class Label { Converter, NonConverter };

std::string to_string(Gender g);
std::string to_string(Label l);

struct VisitRecord {
  std::string subject_id;
  std::string visit_id;
  double age = 0.0;
  Gender gender = Gender::F;
  int apoe4 = 0;
  double cdr = 0.0;
  int mmse = 30;
  double npiq = 0.0;
  std::optional<double> abeta42;
  std::optional<int> amyloid_status;
  Label label = Label::NonConverter;
  std::string volume_ref;

  std::string key() const { return subject_id + "/" + visit_id; }
  bool converter() const { return label == Label::Converter; }
};

/// Column order of the cohort table.
const std::vector<std::string>& cohort_columns();

/// Shortest decimal text that reads back to the same double.
std::string format_real(double x);

/// Header plus one row per record, '\n' line endings, '.' decimal point,
/// absent optionals as empty cells.
std::string cohort_csv(const std::vector<VisitRecord>& records);
void write_cohort_csv(const std::vector<VisitRecord>& records, const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based source line of each row

  /// Index of a column, or -1.
  int column(const std::string& name) const;
};

/// Plain comma-separated text without quoting. A row whose field count
/// differs from the header throws ValidationError naming the line.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// Converts one row to a record. Returns nullopt and sets `reason` when a
/// field is missing, malformed or out of range (e.g. "mmse out of range [0,30]").
std::optional<VisitRecord> parse_visit(const CsvTable& table, std::size_t row, std::string& reason);

/// Strict reader for a cohort table: schema mismatch or any invalid row
/// throws ValidationError with the line number.
std::vector<VisitRecord> read_cohort_csv(const std::filesystem::path& path);

}  // namespace dnpi
