#include "dnpi/report.hpp"

#include "dnpi/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dnpi {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  // width in code points so "β" and "†" count once
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n >= w ? s : s + std::string(w - n, ' ');
}

void save(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string format_p(double p) {
  if (p < 0.001) return "<0.001";
  return fixed(p, 3);
}

std::string significance_mark(double p) { return p < 0.05 ? "\xE2\x80\xA0" : ""; }

std::string format_auc(double auc, double low, double high) {
  return fixed(auc, 2) + " [" + fixed(low, 2) + "-" + fixed(high, 2) + "]";
}

std::string format_association_table(const nlohmann::json& a) {
  std::ostringstream s;
  s << pad("Model", 34) << " | OR   | 95% CI         | p\n";
  for (const auto& r : a.at("rows")) {
    if (r.contains("error")) {
      s << pad(r.at("label").get<std::string>(), 34) << " | not estimable (separation)\n";
      continue;
    }
    const double p = r.at("p_value").get<double>();
    s << pad(r.at("label").get<std::string>(), 34) << " | " << fixed(r.at("odds_ratio").get<double>(), 2) << " | "
      << pad("[" + fixed(r.at("ci_low").get<double>(), 2) + ", " + fixed(r.at("ci_high").get<double>(), 2) + "]", 14)
      << " | " << format_p(p) << significance_mark(p) << "\n";
  }
  s << "\xE2\x80\xA0 p < 0.05. Odds ratio per unit DNPI";
  if (a.value("standardize_dnpi", false)) s << " (per SD)";
  s << ", sign convention " << a.value("sign_convention", std::string("?")) << ".\n";
  return s.str();
}

std::string format_discrimination_table(const nlohmann::json& d) {
  std::ostringstream s;
  s << pad("Model", 28) << " | AUC [95% CI]     | BA [95% CI]      | F1 [95% CI]\n";
  for (const auto& m : d.at("models")) {
    if (m.contains("error")) {
      s << pad(m.at("name").get<std::string>(), 28) << " | not estimable (separation in the fit set)\n";
      continue;
    }
    const auto& op = m.at("operating_point");
    s << pad(m.at("name").get<std::string>(), 28) << " | "
      << format_auc(m.at("auc"), m.at("auc_ci95")[0], m.at("auc_ci95")[1]) << " | "
      << format_auc(op.at("balanced_accuracy"), m.at("balanced_accuracy_ci95")[0], m.at("balanced_accuracy_ci95")[1])
      << " | " << format_auc(op.at("f1"), m.at("f1_ci95")[0], m.at("f1_ci95")[1]) << "\n";
  }
  s << "BA and F1 at FPR <= " << fixed(d.value("fpr_cap", 0.2), 2) << "; " << d.value("bootstrap_iterations", 0)
    << " bootstrap resamples of the evaluation set.\n";
  return s.str();
}

std::string format_confusion(const nlohmann::json& d) {
  std::ostringstream s;
  for (const auto& m : d.at("models")) {
    if (m.contains("error")) continue;
    const auto& op = m.at("operating_point");
    s << m.at("name").get<std::string>() << " (threshold " << fixed(op.at("threshold"), 4) << ", FPR "
      << fixed(op.at("achieved_fpr"), 3) << ")\n";
    s << "                 pred conv  pred non\n";
    s << "  converter      " << pad(std::to_string(op.at("tp").get<int>()), 10) << " " << op.at("fn").get<int>()
      << "\n";
    s << "  non-converter  " << pad(std::to_string(op.at("fp").get<int>()), 10) << " " << op.at("tn").get<int>()
      << "\n\n";
  }
  return s.str();
}

std::string format_summary(const nlohmann::json& a) {
  std::ostringstream s;
  s << pad("Variable", 18) << " | " << pad("Converter", 16) << " | Non-converter\n";
  for (const auto& r : a.at("summary"))
    s << pad(r.at("variable").get<std::string>(), 18) << " | " << pad(r.at("converter").get<std::string>(), 16)
      << " | " << r.at("non_converter").get<std::string>() << "\n";
  if (a.contains("dnpi_group_test")) {
    const auto& g = a.at("dnpi_group_test");
    s << "DNPI converter vs non-converter: Welch p = " << format_p(g.at("welch_p")) << ", Mann-Whitney p = "
      << format_p(g.at("mann_whitney_p")) << "\n";
  }
  return s.str();
}

std::pair<double, double> roc_pixel(double fpr, double tpr, const SvgFrame& f) {
  return {f.margin + fpr * f.size, f.margin + (1.0 - tpr) * f.size};
}

std::string roc_svg(const nlohmann::json& d, const SvgFrame& f) {
  const int total = f.size + 2 * f.margin;
  std::ostringstream s;
  auto pt = [&](double x, double y) {
    const auto [px, py] = roc_pixel(x, y, f);
    return fixed(px, 2) + "," + fixed(py, 2);
  };
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total << "\" height=\"" << total << "\">\n";
  s << "<rect x=\"" << f.margin << "\" y=\"" << f.margin << "\" width=\"" << f.size << "\" height=\"" << f.size
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<polyline points=\"" << pt(0, 0) << " " << pt(1, 1) << "\" fill=\"none\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
  std::size_t k = 0;
  for (const auto& m : d.at("models")) {
    if (m.contains("error")) continue;
    const char* color = kColors[k % (sizeof kColors / sizeof *kColors)];
    const auto& band = m.at("band");
    const auto& fpr = band.at("fpr");
    if (!fpr.empty()) {
      s << "<polygon class=\"band\" points=\"";
      for (std::size_t i = 0; i < fpr.size(); ++i) s << pt(fpr[i], band.at("tpr_high")[i]) << " ";
      for (std::size_t i = fpr.size(); i-- > 0;) s << pt(fpr[i], band.at("tpr_low")[i]) << " ";
      s << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    s << "<polyline class=\"roc\" points=\"";
    for (const auto& p : m.at("roc_points")) s << pt(p.at("fpr"), p.at("tpr")) << " ";
    s << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << f.margin + f.size - 180 << "\" y=\"" << f.margin + f.size - 10 - 16 * static_cast<int>(k)
      << "\" font-size=\"11\" fill=\"" << color << "\">" << m.at("name").get<std::string>() << " AUC "
      << fixed(m.at("auc"), 2) << "</text>\n";
    ++k;
  }
  s << "<text x=\"" << f.margin + f.size / 2 - 40 << "\" y=\"" << total - 8 << "\" font-size=\"12\">1 - specificity</text>\n";
  s << "<text x=\"12\" y=\"" << f.margin + f.size / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 "
    << f.margin + f.size / 2 << ")\">sensitivity</text>\n";
  s << "</svg>\n";
  return s.str();
}

void write_report(const nlohmann::json& association, const nlohmann::json& discrimination,
                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  try {
    save(dir / "summary.txt", format_summary(association));
    save(dir / "association.txt", format_association_table(association));
    save(dir / "discrimination.txt", format_discrimination_table(discrimination));
    save(dir / "confusion.txt", format_confusion(discrimination));
    save(dir / "roc.svg", roc_svg(discrimination));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed analysis artifact: ") + e.what());
  }
}

}  // namespace dnpi
