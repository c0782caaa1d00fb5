#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>

namespace dnpi {

/// Three decimals, "<0.001" below that.
std::string format_p(double p);

/// "†" when p < 0.05, empty otherwise (p = 0.05 is not marked).
std::string significance_mark(double p);

/// "0.65 [0.63-0.67]".
std::string format_auc(double auc, double low, double high);

/// Association rows: label | OR | [low, high] | p, rendered from association.json.
std::string format_association_table(const nlohmann::json& association);

/// Discrimination rows: model | AUC [CI] | BA [CI] | F1 [CI], from discrimination.json.
std::string format_discrimination_table(const nlohmann::json& discrimination);

/// 2x2 confusion matrix per model at the fixed-FPR operating point.
std::string format_confusion(const nlohmann::json& discrimination);

/// Group summary table from the "summary" block of association.json.
std::string format_summary(const nlohmann::json& association);

struct SvgFrame {
  int size = 400;   // plot area, pixels
  int margin = 40;
};

/// Pixel coordinates of an ROC point; y grows downwards.
std::pair<double, double> roc_pixel(double fpr, double tpr, const SvgFrame& f = {});

/// ROC curves (polylines) with bootstrap bands (polygons) for every model.
std::string roc_svg(const nlohmann::json& discrimination, const SvgFrame& f = {});

/// Writes every report file into `dir`, reading only the two JSON artifacts.
void write_report(const nlohmann::json& association, const nlohmann::json& discrimination,
                  const std::filesystem::path& dir);

}  // namespace dnpi
