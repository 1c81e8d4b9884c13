#pragma once

#include <map>
#include <string>
#include <vector>

#include "cxr/probability.hpp"

namespace cxr {

struct ConfusionCounts {
  long tp = 0;
  long fn = 0;
  long tn = 0;
  long fp = 0;

  long positives() const { return tp + fn; }
  long negatives() const { return tn + fp; }
  long total() const { return tp + fn + tn + fp; }
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// Points ordered by threshold descending; anchored at (0,0) and (1,1).
struct RocCurve {
  std::vector<RocPoint> points;
  std::vector<double> thresholds;
};

struct MetricsReport {
  double accuracy = 0.0;
  double auc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double threshold = 0.5;
  ConfusionCounts counts;
  std::map<std::string, std::string> meta;
};

// Prediction convention across all modules: abnormal iff p >= threshold.
ConfusionCounts confusion_at_threshold(const std::vector<ProbabilityRecord>& records,
                                       double threshold);

// sensitivity = TP/(TP+FN), specificity = TN/(TN+FP). On balanced counts the
// accuracy is evaluated as (sens+spec)/2, the same rational value, so the
// balanced identity holds bit-exactly.
MetricsReport classification_metrics(const ConfusionCounts& counts);

MetricsReport evaluate_records(const std::vector<ProbabilityRecord>& records, double threshold);

// Threshold sweep over all distinct scores plus anchors; AUC by trapezoid, and
// it equals the Mann-Whitney statistic with ties counted half.
std::pair<RocCurve, double> roc_auc(const std::vector<ProbabilityRecord>& records);

enum class OperatingTarget { sensitivity, specificity };

struct OperatingPoint {
  double threshold = 0.5;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

// Meets the target constraint (>= value) while maximizing the other metric;
// ties resolve toward the higher threshold.
OperatingPoint operating_point(const RocCurve& curve, OperatingTarget target, double value);

struct SummaryStat {
  double mean = 0.0;
  double sd = 0.0;  // sample sd (n-1); 0 when n == 1
};

struct RunSummary {
  int n = 0;
  SummaryStat accuracy, auc, sensitivity, specificity;
};

RunSummary summarize_runs(const std::vector<MetricsReport>& reports);

void save_metrics_json(const MetricsReport& report, const std::string& path);
MetricsReport load_metrics_json(const std::string& path);
void save_summary_json(const RunSummary& summary, const std::string& path);
void save_roc_csv(const RocCurve& curve, const std::string& path);
RocCurve load_roc_csv(const std::string& path);

}  // namespace cxr
