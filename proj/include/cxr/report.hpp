#pragma once

#include <string>
#include <vector>

#include "cxr/ensemble.hpp"
#include "cxr/metrics.hpp"
#include "cxr/occlusion.hpp"

namespace cxr {

struct NamedCurve {
  std::string name;
  RocCurve curve;
  double auc = 0.0;
};

struct ErrorBarSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> sd;
};

struct BarData {
  std::vector<std::string> labels;
  std::vector<double> values;
  std::vector<double> errors;  // empty = no error bars
};

// Pure rendering: every number shown comes from the inputs, nothing is
// recomputed here.
void write_roc_overlay_svg(const std::string& path, const std::vector<NamedCurve>& curves);
void write_boxplot_svg(const std::string& path, const std::vector<SizeStats>& stats,
                       const std::string& title);
void write_bar_chart_svg(const std::string& path, const BarData& data, const std::string& title,
                         const std::string& y_label);
void write_error_curve_svg(const std::string& path, const std::vector<ErrorBarSeries>& series,
                           const std::string& title, const std::string& x_label,
                           const std::string& y_label);
void write_histogram_svg(const std::string& path, const Histogram& histogram,
                         const std::string& title);

// Renders every figure the artifacts in run_dir support into out_dir; errors
// listing the missing inputs when none are present.
std::vector<std::string> render_report(const std::string& run_dir, const std::string& out_dir);

}  // namespace cxr
