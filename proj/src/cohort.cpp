#include "dnpi/cohort.hpp"

#include "dnpi/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dnpi {

std::string to_string(Gender g) { return g == Gender::M ? "M" : "F"; }
std::string to_string(Label l) { return l == Label::Converter ? "converter" : "non_converter"; }

const std::vector<std::string>& cohort_columns() {
  static const std::vector<std::string> cols{"subject_id", "visit_id", "age",   "gender",          "apoe4",
                                             "cdr",        "mmse",     "npiq",  "abeta42",         "amyloid_status",
                                             "label",      "volume_ref"};
  return cols;
}

std::string format_real(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw NumericError("cannot format real");
  return std::string(buf, end);
}

std::string cohort_csv(const std::vector<VisitRecord>& records) {
  std::string out;
  const auto& cols = cohort_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const VisitRecord& r : records) {
    out += r.subject_id + ',' + r.visit_id + ',' + format_real(r.age) + ',' + to_string(r.gender) + ',' +
           std::to_string(r.apoe4) + ',' + format_real(r.cdr) + ',' + std::to_string(r.mmse) + ',' +
           format_real(r.npiq) + ',' + (r.abeta42 ? format_real(*r.abeta42) : "") + ',' +
           (r.amyloid_status ? std::to_string(*r.amyloid_status) : "") + ',' + to_string(r.label) + ',' +
           r.volume_ref + '\n';
  }
  return out;
}

void write_cohort_csv(const std::vector<VisitRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << cohort_csv(records);
  if (!out) throw IoError("short write on " + path.string());
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      t.header = split(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    if (line.find('"') != std::string::npos)
      throw ValidationError("line " + std::to_string(lineno) + ": quoted fields are not supported");
    auto fields = split(line);
    if (fields.size() != t.header.size())
      throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw ValidationError("schema error: empty CSV (header required)");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::optional<VisitRecord> parse_visit(const CsvTable& t, std::size_t row, std::string& reason) {
  const auto& f = t.rows.at(row);
  auto cell = [&](const char* name) -> const std::string* {
    const int c = t.column(name);
    return c < 0 ? nullptr : &f[static_cast<std::size_t>(c)];
  };
  auto fail = [&](const std::string& why) {
    reason = why;
    return std::optional<VisitRecord>{};
  };
  VisitRecord r;
  const std::string* s;
  if (!(s = cell("subject_id")) || s->empty()) return fail("missing subject_id");
  r.subject_id = *s;
  if (!(s = cell("visit_id")) || s->empty()) return fail("missing visit_id");
  r.visit_id = *s;
  if (!(s = cell("age")) || !parse_double(*s, r.age)) return fail("missing or malformed age");
  if (r.age < 0.0 || r.age > 130.0) return fail("age out of range [0,130]");
  if (!(s = cell("gender")) || (*s != "M" && *s != "F")) return fail("gender must be M or F");
  r.gender = *s == "M" ? Gender::M : Gender::F;
  if (!(s = cell("apoe4")) || !parse_int(*s, r.apoe4)) return fail("missing or malformed apoe4");
  if (r.apoe4 != 0 && r.apoe4 != 1) return fail("apoe4 must be 0 or 1");
  if (!(s = cell("cdr")) || !parse_double(*s, r.cdr)) return fail("missing or malformed cdr");
  if (r.cdr < 0.0) return fail("cdr must be >= 0");
  if (!(s = cell("mmse")) || !parse_int(*s, r.mmse)) return fail("missing or malformed mmse");
  if (r.mmse < 0 || r.mmse > 30) return fail("mmse out of range [0,30]");
  if (!(s = cell("npiq")) || !parse_double(*s, r.npiq)) return fail("missing or malformed npiq");
  if (r.npiq < 0.0) return fail("npiq must be >= 0");
  if ((s = cell("abeta42")) && !s->empty()) {
    double a;
    if (!parse_double(*s, a)) return fail("malformed abeta42");
    if (a <= 0.0) return fail("abeta42 must be > 0");
    r.abeta42 = a;
  }
  if ((s = cell("amyloid_status")) && !s->empty()) {
    int a;
    if (!parse_int(*s, a) || (a != 0 && a != 1)) return fail("amyloid_status must be 0 or 1");
    r.amyloid_status = a;
  }
  if (!(s = cell("label"))) return fail("missing label");
  if (*s == "converter")
    r.label = Label::Converter;
  else if (*s == "non_converter")
    r.label = Label::NonConverter;
  else
    return fail("label must be converter or non_converter");
  if (!(s = cell("volume_ref")) || s->empty()) return fail("missing volume_ref");
  r.volume_ref = *s;
  return r;
}

std::vector<VisitRecord> read_cohort_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  for (const auto& c : cohort_columns())
    if (t.column(c) < 0) throw ValidationError("schema error: missing column '" + c + "' in " + path.string());
  std::vector<VisitRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::string reason;
    auto r = parse_visit(t, i, reason);
    if (!r) throw ValidationError(path.string() + " line " + std::to_string(t.line_numbers[i]) + ": " + reason);
    out.push_back(std::move(*r));
  }
  return out;
}

}  // namespace dnpi
