#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cxr/metrics.hpp"
#include "cxr/probability.hpp"

namespace cxr {

// A pool of trained models' probabilities over one common test set.
// Models are ordered lexicographically by id, images by id; probs[m][i] is
// model m's p_abnormal on image i.
struct EnsemblePool {
  std::vector<std::string> model_ids;
  std::vector<std::string> image_ids;
  std::vector<int> labels;
  std::vector<std::vector<double>> probs;

  int size() const { return static_cast<int>(model_ids.size()); }
  int n_images() const { return static_cast<int>(image_ids.size()); }
};

EnsemblePool make_pool(const std::vector<std::vector<ProbabilityRecord>>& per_model);

// Unweighted mean of member probabilities per image. subset is a list of
// model ids drawn from the pool.
std::vector<ProbabilityRecord> average_probabilities(const EnsemblePool& pool,
                                                     const std::vector<std::string>& subset);

struct SubsetResult {
  uint32_t mask = 0;  // bit i = pool.model_ids[i]
  int size = 0;
  double accuracy = 0.0;
  double auc = 0.0;

  std::vector<std::string> member_ids(const EnsemblePool& pool) const;
};

// Pools are capped at 24 models (2^24-1 subsets); larger pools must use the
// sampling scan.
inline constexpr int kMaxExhaustivePool = 24;

// Streams every non-empty subset in (size, lexicographic members) order.
void for_each_subset(const EnsemblePool& pool, double threshold,
                     const std::function<void(const SubsetResult&)>& sink);

// Materialized variant for small pools and tests.
std::vector<SubsetResult> evaluate_all_subsets(const EnsemblePool& pool, double threshold);

struct SizeStats {
  int size = 0;
  long count = 0;
  double min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
};

enum class SubsetMetric { accuracy, auc };

// Percentiles use linear interpolation between order statistics.
std::vector<SizeStats> subset_size_stats(const std::vector<SubsetResult>& results,
                                         SubsetMetric metric = SubsetMetric::accuracy);

// Streaming evaluation with per-size accumulation; the OpenMP scan partitions
// the enumeration per (size, leading member) and is bit-identical to the
// serial one.
std::vector<SizeStats> scan_subset_stats(const EnsemblePool& pool, double threshold,
                                         SubsetMetric metric = SubsetMetric::accuracy);
std::vector<SizeStats> scan_subset_stats_serial(const EnsemblePool& pool, double threshold,
                                                SubsetMetric metric = SubsetMetric::accuracy);

// Approximate scan for pools over the exhaustive cap: uniform subset draws
// per size.
std::vector<SizeStats> sample_subset_stats(const EnsemblePool& pool, double threshold,
                                           long samples_per_size, uint64_t seed,
                                           SubsetMetric metric = SubsetMetric::accuracy);

// Accuracy-maximizing threshold over all distinct probabilities; ties resolve
// toward the threshold closest to 0.5.
std::pair<double, double> tune_threshold(const std::vector<ProbabilityRecord>& records);

void save_size_stats_json(const std::vector<SizeStats>& stats, const std::string& path);
std::vector<SizeStats> load_size_stats_json(const std::string& path);
void write_subset_csv_header(std::ostream& out);
void write_subset_csv_row(std::ostream& out, const SubsetResult& r);

}  // namespace cxr
