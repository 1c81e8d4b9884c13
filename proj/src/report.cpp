#include "cxr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cxr/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {

namespace {

constexpr int kWidth = 640, kHeight = 480;
constexpr int kLeft = 70, kRight = 24, kTop = 40, kBottom = 56;
constexpr int kPlotW = kWidth - kLeft - kRight;
constexpr int kPlotH = kHeight - kTop - kBottom;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

class Svg {
 public:
  explicit Svg(const std::string& path) : out_(path) {
    if (!out_) throw IoError("cannot write plot: " + path);
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
         << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out_ << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  }
  ~Svg() { out_ << "</svg>\n"; }

  void title(const std::string& text) {
    out_ << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         << "font-family=\"sans-serif\" font-size=\"15\">" << text << "</text>\n";
  }

  void axes(double x0, double x1, double y0, double y1, const std::string& x_label,
            const std::string& y_label, int x_ticks = 5, int y_ticks = 5) {
    x0_ = x0; x1_ = x1; y0_ = y0; y1_ = y1;
    out_ << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW
         << "\" height=\"" << kPlotH << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= x_ticks; ++i) {
      const double v = x0 + (x1 - x0) * i / x_ticks;
      const double px = sx(v);
      out_ << "<line x1=\"" << fmt(px) << "\" y1=\"" << kTop + kPlotH << "\" x2=\"" << fmt(px)
           << "\" y2=\"" << kTop + kPlotH + 5 << "\" stroke=\"black\"/>\n";
      out_ << "<text x=\"" << fmt(px) << "\" y=\"" << kTop + kPlotH + 20
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
           << "</text>\n";
    }
    for (int i = 0; i <= y_ticks; ++i) {
      const double v = y0 + (y1 - y0) * i / y_ticks;
      const double py = sy(v);
      out_ << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << fmt(py) << "\" x2=\"" << kLeft
           << "\" y2=\"" << fmt(py) << "\" stroke=\"black\"/>\n";
      out_ << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
           << "</text>\n";
    }
    out_ << "<text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kHeight - 12
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
         << "</text>\n";
    out_ << "<text x=\"16\" y=\"" << kTop + kPlotH / 2
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         << "transform=\"rotate(-90 16 " << kTop + kPlotH / 2 << ")\">" << y_label
         << "</text>\n";
  }

  double sx(double v) const { return kLeft + (v - x0_) / (x1_ - x0_) * kPlotW; }
  double sy(double v) const { return kTop + kPlotH - (v - y0_) / (y1_ - y0_) * kPlotH; }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) out_ << fmt(sx(x)) << "," << fmt(sy(y)) << " ";
    out_ << "\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            const std::string& extra = "") {
    out_ << "<line x1=\"" << fmt(sx(x1)) << "\" y1=\"" << fmt(sy(y1)) << "\" x2=\""
         << fmt(sx(x2)) << "\" y2=\"" << fmt(sy(y2)) << "\" stroke=\"" << color << "\" " << extra
         << "/>\n";
  }

  void rect_data(double x, double y, double w, double h, const std::string& fill,
                 const std::string& stroke) {
    out_ << "<rect x=\"" << fmt(sx(x)) << "\" y=\"" << fmt(sy(y + h)) << "\" width=\""
         << fmt(sx(x + w) - sx(x)) << "\" height=\"" << fmt(sy(y) - sy(y + h)) << "\" fill=\""
         << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }

  void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    int y = kTop + 14;
    for (const auto& [name, color] : entries) {
      out_ << "<line x1=\"" << kLeft + 12 << "\" y1=\"" << y - 4 << "\" x2=\"" << kLeft + 36
           << "\" y2=\"" << y - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      out_ << "<text x=\"" << kLeft + 42 << "\" y=\"" << y
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << name << "</text>\n";
      y += 16;
    }
  }

  void text_at(double x, double y, const std::string& text, int size = 11,
               const std::string& anchor = "middle") {
    out_ << "<text x=\"" << fmt(sx(x)) << "\" y=\"" << fmt(sy(y)) << "\" text-anchor=\""
         << anchor << "\" font-family=\"sans-serif\" font-size=\"" << size << "\">" << text
         << "</text>\n";
  }

 private:
  std::ofstream out_;
  double x0_ = 0, x1_ = 1, y0_ = 0, y1_ = 1;
};

}  // namespace

void write_roc_overlay_svg(const std::string& path, const std::vector<NamedCurve>& curves) {
  if (curves.empty()) throw ValidationError("write_roc_overlay_svg: no curves");
  Svg svg(path);
  svg.title("ROC");
  svg.axes(0, 1, 0, 1, "false positive rate", "true positive rate");
  svg.line(0, 0, 1, 1, "#bbbbbb", "stroke-dasharray=\"4 3\"");
  std::vector<std::pair<std::string, std::string>> legend;
  for (size_t i = 0; i < curves.size(); ++i) {
    const std::string color = kColors[i % 8];
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curves[i].curve.points) pts.emplace_back(p.fpr, p.tpr);
    svg.polyline(pts, color);
    char label[160];
    std::snprintf(label, sizeof(label), "%s (AUC %.4f)", curves[i].name.c_str(), curves[i].auc);
    legend.emplace_back(label, color);
  }
  svg.legend(legend);
}

void write_boxplot_svg(const std::string& path, const std::vector<SizeStats>& stats,
                       const std::string& title) {
  if (stats.empty()) throw ValidationError("write_boxplot_svg: no stats");
  Svg svg(path);
  svg.title(title);
  double lo = 1e18, hi = -1e18;
  int max_size = 0;
  for (const auto& s : stats) {
    lo = std::min(lo, s.min);
    hi = std::max(hi, s.max);
    max_size = std::max(max_size, s.size);
  }
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = (hi - lo) * 0.08;
  svg.axes(0, max_size + 1, lo - pad, hi + pad, "models in ensemble", "accuracy");
  for (const auto& s : stats) {
    const double cx = s.size;
    const double half = 0.32;
    svg.line(cx, s.min, cx, s.q25, "black");
    svg.line(cx, s.q75, cx, s.max, "black");
    svg.rect_data(cx - half, s.q25, 2 * half, s.q75 - s.q25, "#c6dbef", "black");
    svg.line(cx - half, s.median, cx + half, s.median, "#d62728", "stroke-width=\"2\"");
    svg.line(cx - half / 2, s.min, cx + half / 2, s.min, "black");
    svg.line(cx - half / 2, s.max, cx + half / 2, s.max, "black");
  }
}

void write_bar_chart_svg(const std::string& path, const BarData& data, const std::string& title,
                         const std::string& y_label) {
  if (data.labels.empty() || data.labels.size() != data.values.size())
    throw ValidationError("write_bar_chart_svg: labels/values mismatch");
  Svg svg(path);
  svg.title(title);
  double hi = 0.0;
  for (size_t i = 0; i < data.values.size(); ++i) {
    double v = data.values[i] + (i < data.errors.size() ? data.errors[i] : 0.0);
    hi = std::max(hi, v);
  }
  if (hi <= 0.0) hi = 1.0;
  const int n = static_cast<int>(data.labels.size());
  svg.axes(0, n, 0, hi * 1.1, "", y_label, std::min(n, 10));
  for (int i = 0; i < n; ++i) {
    svg.rect_data(i + 0.15, 0, 0.7, data.values[i], "#9ecae1", "black");
    if (i < static_cast<int>(data.errors.size()) && data.errors[i] > 0.0) {
      svg.line(i + 0.5, data.values[i] - data.errors[i], i + 0.5,
               data.values[i] + data.errors[i], "black");
    }
    svg.text_at(i + 0.5, hi * -0.02, data.labels[i], 9);
  }
}

void write_error_curve_svg(const std::string& path, const std::vector<ErrorBarSeries>& series,
                           const std::string& title, const std::string& x_label,
                           const std::string& y_label) {
  if (series.empty()) throw ValidationError("write_error_curve_svg: no series");
  Svg svg(path);
  svg.title(title);
  double x_lo = 1e18, x_hi = -1e18, y_lo = 1e18, y_hi = -1e18;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.mean[i] - s.sd[i]);
      y_hi = std::max(y_hi, s.mean[i] + s.sd[i]);
    }
  if (x_lo == x_hi) x_hi = x_lo + 1;
  if (y_lo == y_hi) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pad = (y_hi - y_lo) * 0.1;
  svg.axes(x_lo, x_hi, y_lo - pad, y_hi + pad, x_label, y_label);
  std::vector<std::pair<std::string, std::string>> legend;
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string color = kColors[si % 8];
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < s.x.size(); ++i) {
      pts.emplace_back(s.x[i], s.mean[i]);
      svg.line(s.x[i], s.mean[i] - s.sd[i], s.x[i], s.mean[i] + s.sd[i], color);
    }
    svg.polyline(pts, color);
    legend.emplace_back(s.name, color);
  }
  svg.legend(legend);
}

void write_histogram_svg(const std::string& path, const Histogram& histogram,
                         const std::string& title) {
  if (histogram.freq.empty()) throw ValidationError("write_histogram_svg: empty histogram");
  Svg svg(path);
  svg.title(title);
  double hi = 0.0;
  for (double f : histogram.freq) hi = std::max(hi, f);
  if (hi <= 0.0) hi = 1.0;
  svg.axes(0, 1, 0, hi * 1.1, "probability", "frequency");
  const double w = 1.0 / histogram.bins;
  for (int b = 0; b < histogram.bins; ++b)
    svg.rect_data(b * w, 0, w, histogram.freq[b], "#9ecae1", "black");
}

namespace {

Histogram load_histogram_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open histogram: " + path);
  json doc;
  in >> doc;
  Histogram h;
  h.bins = doc.at("bins").get<int>();
  h.counts = doc.at("counts").get<std::vector<long>>();
  h.freq = doc.at("freq").get<std::vector<double>>();
  return h;
}

}  // namespace

std::vector<std::string> render_report(const std::string& run_dir, const std::string& out_dir) {
  const fs::path run(run_dir);
  if (!fs::exists(run)) throw IoError("result directory does not exist: " + run_dir);
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  std::vector<std::string> missing;

  // ROC overlay from per-seed and ensemble curves; AUC read from the stored
  // metrics, never recomputed.
  {
    std::vector<NamedCurve> curves;
    auto add_curve = [&curves](const fs::path& roc, const fs::path& metrics,
                               const std::string& name) {
      if (!fs::exists(roc) || !fs::exists(metrics)) return;
      NamedCurve c;
      c.name = name;
      c.curve = load_roc_csv(roc.string());
      c.auc = load_metrics_json(metrics.string()).auc;
      curves.push_back(std::move(c));
    };
    const fs::path seeds = run / "seeds";
    if (fs::exists(seeds)) {
      std::vector<fs::path> dirs;
      for (const auto& e : fs::directory_iterator(seeds))
        if (e.is_directory()) dirs.push_back(e.path());
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs)
        add_curve(d / "roc.csv", d / "metrics.json", d.filename().string());
    }
    add_curve(run / "ensemble" / "roc.csv", run / "ensemble" / "metrics.json", "ensemble");
    if (!curves.empty()) {
      const std::string path = (fs::path(out_dir) / "roc_overlay.svg").string();
      write_roc_overlay_svg(path, curves);
      written.push_back(path);
    } else {
      missing.push_back((seeds / "*" / "roc.csv").string());
    }
  }

  // subset-size boxplot
  {
    const fs::path stats_path = run / "ensemble" / "subset_stats.json";
    if (fs::exists(stats_path)) {
      const auto stats = load_size_stats_json(stats_path.string());
      const std::string path = (fs::path(out_dir) / "subset_boxplot.svg").string();
      write_boxplot_svg(path, stats, "Ensemble subsets by size");
      written.push_back(path);
    } else {
      missing.push_back(stats_path.string());
    }
  }

  // layer-study bar chart
  {
    const fs::path layer_path = run / "layer_study.json";
    if (fs::exists(layer_path)) {
      std::ifstream in(layer_path);
      json arr;
      in >> arr;
      BarData data;
      for (const auto& row : arr) {
        data.labels.push_back(row.at("layer").get<std::string>());
        data.values.push_back(row.at("summary").at("accuracy").at("mean").get<double>());
        data.errors.push_back(row.at("summary").at("accuracy").at("sd").get<double>());
      }
      const std::string path = (fs::path(out_dir) / "layer_study.svg").string();
      write_bar_chart_svg(path, data, "Accuracy by tap layer", "accuracy");
      written.push_back(path);
    } else {
      missing.push_back(layer_path.string());
    }
  }

  // training-size curves
  {
    const fs::path sweep_path = run / "size_sweep.json";
    if (fs::exists(sweep_path)) {
      std::ifstream in(sweep_path);
      json arr;
      in >> arr;
      ErrorBarSeries acc{"accuracy", {}, {}, {}}, auc{"auc", {}, {}, {}};
      for (const auto& row : arr) {
        const double size = row.at("train_size").get<int>();
        acc.x.push_back(size);
        acc.mean.push_back(row.at("summary").at("accuracy").at("mean").get<double>());
        acc.sd.push_back(row.at("summary").at("accuracy").at("sd").get<double>());
        auc.x.push_back(size);
        auc.mean.push_back(row.at("summary").at("auc").at("mean").get<double>());
        auc.sd.push_back(row.at("summary").at("auc").at("sd").get<double>());
      }
      const std::string path = (fs::path(out_dir) / "size_sweep.svg").string();
      write_error_curve_svg(path, {acc, auc}, "Metrics vs training-set size",
                            "training samples per class", "metric");
      written.push_back(path);
    } else {
      missing.push_back(sweep_path.string());
    }
  }

  // heat-map histograms
  {
    const fs::path loc = run / "localization";
    bool any = false;
    if (fs::exists(loc)) {
      std::vector<fs::path> hists;
      for (const auto& e : fs::recursive_directory_iterator(loc))
        if (e.is_regular_file() && e.path().filename().string().rfind("histogram", 0) == 0 &&
            e.path().extension() == ".json")
          hists.push_back(e.path());
      std::sort(hists.begin(), hists.end());
      for (const auto& h : hists) {
        std::string stem = h.parent_path().filename().string() + "_" + h.stem().string();
        const std::string path = (fs::path(out_dir) / (stem + ".svg")).string();
        write_histogram_svg(path, load_histogram_json(h.string()), "Heat map histogram");
        written.push_back(path);
        any = true;
      }
    }
    if (!any) missing.push_back((loc / "*" / "histogram.json").string());
  }

  if (written.empty())
    throw ValidationError("render_report: no renderable inputs in " + run_dir +
                          "; looked for: " + join(missing, ", "));
  return written;
}

}  // namespace cxr
