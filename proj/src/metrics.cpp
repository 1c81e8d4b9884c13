#include "cxr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cxr/common.hpp"

using nlohmann::json;

namespace cxr {

void save_probability_csv(const std::vector<ProbabilityRecord>& records,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write probability records: " + path);
  out << "image_id,model_id,p_abnormal,true_label\n";
  out.precision(17);
  for (const auto& r : records)
    out << r.image_id << "," << r.model_id << "," << r.p_abnormal << "," << r.true_label << "\n";
}

std::vector<ProbabilityRecord> load_probability_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open probability records: " + path);
  std::vector<ProbabilityRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || trim(line).empty()) continue;
    auto fields = split(trim(line), ',');
    if (fields.size() != 4)
      throw ValidationError("unparseable record on line " + std::to_string(lineno) + " of " +
                            path);
    ProbabilityRecord r;
    r.image_id = fields[0];
    r.model_id = fields[1];
    r.p_abnormal = std::stod(fields[2]);
    r.true_label = std::stoi(fields[3]);
    if (r.p_abnormal < 0.0 || r.p_abnormal > 1.0)
      throw ValidationError("probability outside [0,1] on line " + std::to_string(lineno) +
                            " of " + path);
    records.push_back(std::move(r));
  }
  return records;
}

ConfusionCounts confusion_at_threshold(const std::vector<ProbabilityRecord>& records,
                                       double threshold) {
  if (records.empty()) throw ValidationError("confusion_at_threshold: no records");
  if (threshold < 0.0 || threshold > 1.0)
    throw ValidationError("confusion_at_threshold: threshold outside [0,1]");
  ConfusionCounts c;
  for (const auto& r : records) {
    const bool predicted_abnormal = r.p_abnormal >= threshold;
    if (r.true_label == 1)
      predicted_abnormal ? ++c.tp : ++c.fn;
    else
      predicted_abnormal ? ++c.fp : ++c.tn;
  }
  return c;
}

MetricsReport classification_metrics(const ConfusionCounts& counts) {
  if (counts.tp < 0 || counts.fn < 0 || counts.tn < 0 || counts.fp < 0)
    throw ValidationError("classification_metrics: negative count");
  if (counts.positives() == 0)
    throw ValidationError("classification_metrics: sensitivity undefined (no positives)");
  if (counts.negatives() == 0)
    throw ValidationError("classification_metrics: specificity undefined (no negatives)");
  MetricsReport r;
  r.counts = counts;
  r.sensitivity = static_cast<double>(counts.tp) / static_cast<double>(counts.positives());
  r.specificity = static_cast<double>(counts.tn) / static_cast<double>(counts.negatives());
  if (counts.positives() == counts.negatives())
    r.accuracy = (r.sensitivity + r.specificity) / 2.0;  // bit-exact balanced identity
  else
    r.accuracy =
        static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
  return r;
}

MetricsReport evaluate_records(const std::vector<ProbabilityRecord>& records, double threshold) {
  MetricsReport r = classification_metrics(confusion_at_threshold(records, threshold));
  r.threshold = threshold;
  r.auc = roc_auc(records).second;
  return r;
}

namespace detail {

// Trapezoidal AUC over the threshold sweep of (score, label) pairs. Shared by
// roc_auc and the ensemble subset scan so singleton subsets reproduce the
// member's AUC bit-exactly. Sorts in place.
double auc_from_scored(std::vector<std::pair<double, int>>& scored) {
  long p = 0, n = 0;
  for (const auto& [score, label] : scored) label == 1 ? ++p : ++n;
  if (p == 0 || n == 0)
    throw ValidationError("roc_auc: both classes must be present (positives=" +
                          std::to_string(p) + ", negatives=" + std::to_string(n) + ")");
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  double auc = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  long tp = 0, fp = 0;
  size_t i = 0;
  while (i < scored.size()) {
    const double score = scored[i].first;
    while (i < scored.size() && scored[i].first == score) {
      scored[i].second == 1 ? ++tp : ++fp;
      ++i;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(n);
    const double tpr = static_cast<double>(tp) / static_cast<double>(p);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  return auc;
}

}  // namespace detail

std::pair<RocCurve, double> roc_auc(const std::vector<ProbabilityRecord>& records) {
  long p = 0, n = 0;
  for (const auto& r : records) r.true_label == 1 ? ++p : ++n;
  if (p == 0 || n == 0)
    throw ValidationError("roc_auc: both classes must be present (positives=" +
                          std::to_string(p) + ", negatives=" + std::to_string(n) + ")");

  std::vector<std::pair<double, int>> scored;  // (p_abnormal, label)
  scored.reserve(records.size());
  for (const auto& r : records) scored.emplace_back(r.p_abnormal, r.true_label);
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  long tp = 0, fp = 0;
  size_t i = 0;
  while (i < scored.size()) {
    const double score = scored[i].first;
    while (i < scored.size() && scored[i].first == score) {
      scored[i].second == 1 ? ++tp : ++fp;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n),
                            static_cast<double>(tp) / static_cast<double>(p)});
    curve.thresholds.push_back(score);
  }

  const double auc = detail::auc_from_scored(scored);
  return {std::move(curve), auc};
}

OperatingPoint operating_point(const RocCurve& curve, OperatingTarget target, double value) {
  if (curve.points.empty()) throw ValidationError("operating_point: empty curve");
  if (!(value > 0.0 && value < 1.0))
    throw ValidationError("operating_point: target value must be in (0,1)");

  const OperatingPoint* best = nullptr;
  std::vector<OperatingPoint> pts;
  pts.reserve(curve.points.size());
  for (size_t i = 0; i < curve.points.size(); ++i)
    pts.push_back({curve.thresholds[i], curve.points[i].tpr, 1.0 - curve.points[i].fpr});

  double best_other = -1.0;
  double best_achievable = 0.0;
  for (const auto& pt : pts) {
    const double constrained = target == OperatingTarget::sensitivity ? pt.sensitivity
                                                                      : pt.specificity;
    const double other = target == OperatingTarget::sensitivity ? pt.specificity
                                                                : pt.sensitivity;
    best_achievable = std::max(best_achievable, constrained);
    if (constrained < value) continue;
    // Points run threshold-descending, so ">" keeps the higher threshold on ties.
    if (other > best_other) {
      best_other = other;
      best = &pt;
    }
  }
  if (!best)
    throw ValidationError("operating_point: target unreachable; best achievable " +
                          std::to_string(best_achievable));
  return *best;
}

RunSummary summarize_runs(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ValidationError("summarize_runs: no reports");
  auto stat = [&reports](auto getter) {
    SummaryStat s;
    double sum = 0.0;
    for (const auto& r : reports) sum += getter(r);
    s.mean = sum / static_cast<double>(reports.size());
    if (reports.size() > 1) {
      double ss = 0.0;
      for (const auto& r : reports) {
        const double d = getter(r) - s.mean;
        ss += d * d;
      }
      s.sd = std::sqrt(ss / static_cast<double>(reports.size() - 1));
    }
    return s;
  };
  RunSummary out;
  out.n = static_cast<int>(reports.size());
  out.accuracy = stat([](const MetricsReport& r) { return r.accuracy; });
  out.auc = stat([](const MetricsReport& r) { return r.auc; });
  out.sensitivity = stat([](const MetricsReport& r) { return r.sensitivity; });
  out.specificity = stat([](const MetricsReport& r) { return r.specificity; });
  return out;
}

static json report_to_json(const MetricsReport& r) {
  return {{"accuracy", r.accuracy},
          {"auc", r.auc},
          {"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"threshold", r.threshold},
          {"counts", {{"tp", r.counts.tp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}, {"fp", r.counts.fp}}},
          {"meta", r.meta}};
}

void save_metrics_json(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics: " + path);
  out << report_to_json(report).dump(2) << "\n";
}

MetricsReport load_metrics_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics: " + path);
  json doc;
  in >> doc;
  MetricsReport r;
  r.accuracy = doc.at("accuracy").get<double>();
  r.auc = doc.at("auc").get<double>();
  r.sensitivity = doc.at("sensitivity").get<double>();
  r.specificity = doc.at("specificity").get<double>();
  r.threshold = doc.at("threshold").get<double>();
  const auto& c = doc.at("counts");
  r.counts = {c.at("tp").get<long>(), c.at("fn").get<long>(), c.at("tn").get<long>(),
              c.at("fp").get<long>()};
  if (doc.contains("meta"))
    r.meta = doc["meta"].get<std::map<std::string, std::string>>();
  return r;
}

void save_summary_json(const RunSummary& summary, const std::string& path) {
  auto stat = [](const SummaryStat& s) { return json{{"mean", s.mean}, {"sd", s.sd}}; };
  json doc = {{"n", summary.n},
              {"accuracy", stat(summary.accuracy)},
              {"auc", stat(summary.auc)},
              {"sensitivity", stat(summary.sensitivity)},
              {"specificity", stat(summary.specificity)}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write summary: " + path);
  out << doc.dump(2) << "\n";
}

void save_roc_csv(const RocCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ROC curve: " + path);
  out << "threshold,fpr,tpr\n";
  out.precision(17);
  for (size_t i = 0; i < curve.points.size(); ++i) {
    if (std::isinf(curve.thresholds[i]))
      out << "inf";
    else
      out << curve.thresholds[i];
    out << "," << curve.points[i].fpr << "," << curve.points[i].tpr << "\n";
  }
}

RocCurve load_roc_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ROC curve: " + path);
  RocCurve curve;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || trim(line).empty()) continue;
    auto fields = split(trim(line), ',');
    if (fields.size() != 3)
      throw ValidationError("unparseable ROC line " + std::to_string(lineno) + " in " + path);
    curve.thresholds.push_back(fields[0] == "inf" ? std::numeric_limits<double>::infinity()
                                                  : std::stod(fields[0]));
    curve.points.push_back({std::stod(fields[1]), std::stod(fields[2])});
  }
  return curve;
}

}  // namespace cxr
