#include "cxr/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "cxr/common.hpp"

using nlohmann::json;

namespace cxr {

namespace detail {
double auc_from_scored(std::vector<std::pair<double, int>>& scored);  // metrics.cpp
}

EnsemblePool make_pool(const std::vector<std::vector<ProbabilityRecord>>& per_model) {
  if (per_model.empty()) throw ValidationError("make_pool: no models");
  struct ModelRecords {
    std::string id;
    std::vector<ProbabilityRecord> records;
  };
  std::vector<ModelRecords> models;
  for (const auto& records : per_model) {
    if (records.empty()) throw ValidationError("make_pool: model with no records");
    ModelRecords m;
    m.id = records.front().model_id;
    m.records = records;
    std::sort(m.records.begin(), m.records.end(),
              [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    for (size_t i = 1; i < m.records.size(); ++i)
      if (m.records[i].image_id == m.records[i - 1].image_id)
        throw ValidationError("make_pool: model " + m.id + " scored image " +
                              m.records[i].image_id + " twice");
    models.push_back(std::move(m));
  }
  std::sort(models.begin(), models.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (size_t i = 1; i < models.size(); ++i)
    if (models[i].id == models[i - 1].id)
      throw ValidationError("make_pool: duplicate model id " + models[i].id);

  EnsemblePool pool;
  for (const auto& r : models.front().records) {
    pool.image_ids.push_back(r.image_id);
    pool.labels.push_back(r.true_label);
  }
  for (const auto& m : models) {
    if (m.records.size() != pool.image_ids.size())
      throw ValidationError("make_pool: model " + m.id + " covers " +
                            std::to_string(m.records.size()) + " images, expected " +
                            std::to_string(pool.image_ids.size()));
    std::vector<double> probs(m.records.size());
    for (size_t i = 0; i < m.records.size(); ++i) {
      if (m.records[i].image_id != pool.image_ids[i])
        throw ValidationError("make_pool: model " + m.id + " is missing image " +
                              pool.image_ids[i]);
      if (m.records[i].true_label != pool.labels[i])
        throw ValidationError("make_pool: label disagreement on image " + pool.image_ids[i]);
      if (m.records[i].p_abnormal < 0.0 || m.records[i].p_abnormal > 1.0)
        throw ValidationError("make_pool: probability outside [0,1] for image " +
                              pool.image_ids[i]);
      probs[i] = m.records[i].p_abnormal;
    }
    pool.model_ids.push_back(m.id);
    pool.probs.push_back(std::move(probs));
  }
  return pool;
}

std::vector<ProbabilityRecord> average_probabilities(const EnsemblePool& pool,
                                                     const std::vector<std::string>& subset) {
  if (subset.empty()) throw ValidationError("average_probabilities: empty subset");
  std::vector<int> indices;
  for (const auto& id : subset) {
    auto it = std::find(pool.model_ids.begin(), pool.model_ids.end(), id);
    if (it == pool.model_ids.end())
      throw ValidationError("average_probabilities: model " + id + " not in pool");
    indices.push_back(static_cast<int>(it - pool.model_ids.begin()));
  }
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
    throw ValidationError("average_probabilities: duplicate model in subset");

  std::vector<ProbabilityRecord> out(pool.n_images());
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (int i = 0; i < pool.n_images(); ++i) {
    double sum = 0.0;
    for (int m : indices) sum += pool.probs[m][i];
    out[i] = {pool.image_ids[i], "ensemble", sum * inv, pool.labels[i]};
  }
  return out;
}

std::vector<std::string> SubsetResult::member_ids(const EnsemblePool& pool) const {
  std::vector<std::string> ids;
  for (int m = 0; m < pool.size(); ++m)
    if (mask & (1u << m)) ids.push_back(pool.model_ids[m]);
  return ids;
}

namespace {

struct SubsetMetrics {
  double accuracy = 0.0;
  double auc = 0.0;
};

// Walks all member combinations of one size with a prefix-sum stack, so each
// subset's member sums accumulate in ascending member order regardless of how
// the enumeration is partitioned.
class SizeEnumerator {
 public:
  SizeEnumerator(const EnsemblePool& pool, double threshold, int k, bool want_auc)
      : pool_(pool),
        threshold_(threshold),
        k_(k),
        want_auc_(want_auc),
        n_(pool.n_images()),
        prefix_(static_cast<size_t>(k + 1) * n_, 0.0),
        members_(k, 0) {
    long positives = 0;
    for (int label : pool.labels) positives += (label == 1);
    positives_ = positives;
    negatives_ = pool.n_images() - positives;
    scratch_.resize(n_);
  }

  template <typename Sink>
  void run(int first_member, Sink&& sink) {
    push(0, first_member);
    descend(1, first_member + 1, sink);
    // stack state is local; nothing to pop
  }

  template <typename Sink>
  void run_all(Sink&& sink) {
    for (int m = 0; m + k_ <= pool_.size(); ++m) run(m, sink);
  }

 private:
  void push(int depth, int member) {
    const double* src = prefix_.data() + static_cast<size_t>(depth) * n_;
    double* dst = prefix_.data() + static_cast<size_t>(depth + 1) * n_;
    const auto& p = pool_.probs[member];
    for (int i = 0; i < n_; ++i) dst[i] = src[i] + p[i];
    members_[depth] = member;
  }

  template <typename Sink>
  void descend(int depth, int start, Sink&& sink) {
    if (depth == k_) {
      emit(sink);
      return;
    }
    for (int m = start; m + (k_ - depth) <= pool_.size(); ++m) {
      push(depth, m);
      descend(depth + 1, m + 1, sink);
    }
  }

  template <typename Sink>
  void emit(Sink&& sink) {
    const double* sums = prefix_.data() + static_cast<size_t>(k_) * n_;
    const double inv = 1.0 / static_cast<double>(k_);
    long tp = 0, tn = 0;
    for (int i = 0; i < n_; ++i) {
      scratch_[i] = {sums[i] * inv, pool_.labels[i]};
      const bool predicted = scratch_[i].first >= threshold_;
      if (pool_.labels[i] == 1)
        tp += predicted;
      else
        tn += !predicted;
    }
    SubsetResult r;
    r.size = k_;
    r.mask = 0;
    for (int d = 0; d < k_; ++d) r.mask |= (1u << members_[d]);
    if (positives_ == negatives_ && positives_ > 0) {
      const double sens = static_cast<double>(tp) / static_cast<double>(positives_);
      const double spec = static_cast<double>(tn) / static_cast<double>(negatives_);
      r.accuracy = (sens + spec) / 2.0;
    } else {
      r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(n_);
    }
    if (want_auc_) r.auc = detail::auc_from_scored(scratch_);
    sink(r);
  }

  const EnsemblePool& pool_;
  double threshold_;
  int k_;
  bool want_auc_;
  int n_;
  long positives_ = 0, negatives_ = 0;
  std::vector<double> prefix_;
  std::vector<int> members_;
  std::vector<std::pair<double, int>> scratch_;
};

void check_pool_for_scan(const EnsemblePool& pool, double threshold) {
  if (pool.size() == 0) throw ValidationError("subset scan: empty pool");
  if (pool.size() > kMaxExhaustivePool)
    throw ValidationError("subset scan: pool of " + std::to_string(pool.size()) +
                          " models exceeds the exhaustive cap of " +
                          std::to_string(kMaxExhaustivePool) +
                          "; use the sampling scan instead");
  if (threshold < 0.0 || threshold > 1.0)
    throw ValidationError("subset scan: threshold outside [0,1]");
  long positives = 0;
  for (int label : pool.labels) positives += (label == 1);
  if (positives == 0 || positives == pool.n_images())
    throw ValidationError("subset scan: both classes must be present in the test set");
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = q * static_cast<double>(n - 1);
  const auto lo = static_cast<size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

SizeStats stats_from_values(int size, std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  SizeStats s;
  s.size = size;
  s.count = static_cast<long>(values.size());
  s.min = values.front();
  s.max = values.back();
  s.q25 = percentile_sorted(values, 0.25);
  s.median = percentile_sorted(values, 0.50);
  s.q75 = percentile_sorted(values, 0.75);
  return s;
}

}  // namespace

void for_each_subset(const EnsemblePool& pool, double threshold,
                     const std::function<void(const SubsetResult&)>& sink) {
  check_pool_for_scan(pool, threshold);
  for (int k = 1; k <= pool.size(); ++k) {
    SizeEnumerator e(pool, threshold, k, /*want_auc=*/true);
    e.run_all([&sink](const SubsetResult& r) { sink(r); });
  }
}

std::vector<SubsetResult> evaluate_all_subsets(const EnsemblePool& pool, double threshold) {
  std::vector<SubsetResult> out;
  for_each_subset(pool, threshold, [&out](const SubsetResult& r) { out.push_back(r); });
  return out;
}

std::vector<SizeStats> subset_size_stats(const std::vector<SubsetResult>& results,
                                         SubsetMetric metric) {
  if (results.empty()) throw ValidationError("subset_size_stats: no results");
  std::map<int, std::vector<double>> by_size;
  for (const auto& r : results)
    by_size[r.size].push_back(metric == SubsetMetric::accuracy ? r.accuracy : r.auc);
  std::vector<SizeStats> out;
  for (auto& [size, values] : by_size) out.push_back(stats_from_values(size, values));
  return out;
}

std::vector<SizeStats> scan_subset_stats(const EnsemblePool& pool, double threshold,
                                         SubsetMetric metric) {
  check_pool_for_scan(pool, threshold);
  const int P = pool.size();
  const bool want_auc = metric == SubsetMetric::auc;

  // One task per (size, leading member); tasks are independent enumerations
  // and every subset's value is computed identically to the serial walk.
  struct Task {
    int k, first;
  };
  std::vector<Task> tasks;
  for (int k = 1; k <= P; ++k)
    for (int first = 0; first + k <= P; ++first) tasks.push_back({k, first});
  std::vector<std::vector<double>> task_values(tasks.size());

#pragma omp parallel for schedule(dynamic)
  for (size_t t = 0; t < tasks.size(); ++t) {
    SizeEnumerator e(pool, threshold, tasks[t].k, want_auc);
    auto& values = task_values[t];
    e.run(tasks[t].first, [&values, metric](const SubsetResult& r) {
      values.push_back(metric == SubsetMetric::accuracy ? r.accuracy : r.auc);
    });
  }

  std::vector<SizeStats> out;
  for (int k = 1; k <= P; ++k) {
    std::vector<double> values;
    for (size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t].k == k)
        values.insert(values.end(), task_values[t].begin(), task_values[t].end());
    out.push_back(stats_from_values(k, values));
  }
  return out;
}

// Reference route: plain serial enumeration, no task partitioning.
std::vector<SizeStats> scan_subset_stats_serial(const EnsemblePool& pool, double threshold,
                                                SubsetMetric metric) {
  check_pool_for_scan(pool, threshold);
  const bool want_auc = metric == SubsetMetric::auc;
  std::vector<SizeStats> out;
  for (int k = 1; k <= pool.size(); ++k) {
    std::vector<double> values;
    SizeEnumerator e(pool, threshold, k, want_auc);
    e.run_all([&values, metric](const SubsetResult& r) {
      values.push_back(metric == SubsetMetric::accuracy ? r.accuracy : r.auc);
    });
    out.push_back(stats_from_values(k, values));
  }
  return out;
}

std::vector<SizeStats> sample_subset_stats(const EnsemblePool& pool, double threshold,
                                           long samples_per_size, uint64_t seed,
                                           SubsetMetric metric) {
  if (pool.size() == 0) throw ValidationError("sample_subset_stats: empty pool");
  if (samples_per_size <= 0)
    throw ValidationError("sample_subset_stats: samples_per_size must be positive");
  const int P = pool.size();
  const int n = pool.n_images();
  std::mt19937_64 rng(seed);
  std::vector<int> all(P);
  std::vector<double> sums(n);
  std::vector<std::pair<double, int>> scored(n);
  std::vector<SizeStats> out;
  for (int k = 1; k <= P; ++k) {
    std::vector<double> values;
    for (long s = 0; s < samples_per_size; ++s) {
      std::iota(all.begin(), all.end(), 0);
      deterministic_shuffle(all, rng);
      std::vector<int> members(all.begin(), all.begin() + k);
      std::sort(members.begin(), members.end());
      std::fill(sums.begin(), sums.end(), 0.0);
      for (int m : members)
        for (int i = 0; i < n; ++i) sums[i] += pool.probs[m][i];
      const double inv = 1.0 / static_cast<double>(k);
      long correct = 0;
      for (int i = 0; i < n; ++i) {
        scored[i] = {sums[i] * inv, pool.labels[i]};
        const bool predicted = scored[i].first >= threshold;
        correct += (predicted == (pool.labels[i] == 1));
      }
      if (metric == SubsetMetric::accuracy)
        values.push_back(static_cast<double>(correct) / static_cast<double>(n));
      else
        values.push_back(detail::auc_from_scored(scored));
    }
    out.push_back(stats_from_values(k, values));
  }
  return out;
}

std::pair<double, double> tune_threshold(const std::vector<ProbabilityRecord>& records) {
  long positives = 0, negatives = 0;
  for (const auto& r : records) r.true_label == 1 ? ++positives : ++negatives;
  if (positives == 0 || negatives == 0)
    throw ValidationError("tune_threshold: both classes must be present");

  std::vector<std::pair<double, int>> scored;
  scored.reserve(records.size());
  for (const auto& r : records) scored.emplace_back(r.p_abnormal, r.true_label);
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  double best_t = 0.5, best_acc = -1.0;
  long tp = 0, fp = 0;
  size_t i = 0;
  while (i < scored.size()) {
    const double t = scored[i].first;
    while (i < scored.size() && scored[i].first == t) {
      scored[i].second == 1 ? ++tp : ++fp;
      ++i;
    }
    const long tn = negatives - fp;
    // Same accuracy arithmetic as classification_metrics.
    double acc;
    if (positives == negatives) {
      acc = (static_cast<double>(tp) / static_cast<double>(positives) +
             static_cast<double>(tn) / static_cast<double>(negatives)) /
            2.0;
    } else {
      acc = static_cast<double>(tp + tn) / static_cast<double>(records.size());
    }
    const bool better =
        acc > best_acc ||
        (acc == best_acc && (std::abs(t - 0.5) < std::abs(best_t - 0.5) ||
                             (std::abs(t - 0.5) == std::abs(best_t - 0.5) && t < best_t)));
    if (better) {
      best_acc = acc;
      best_t = t;
    }
  }
  return {best_t, best_acc};
}

void save_size_stats_json(const std::vector<SizeStats>& stats, const std::string& path) {
  json arr = json::array();
  for (const auto& s : stats)
    arr.push_back({{"size", s.size},
                   {"count", s.count},
                   {"min", s.min},
                   {"q25", s.q25},
                   {"median", s.median},
                   {"q75", s.q75},
                   {"max", s.max}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write size stats: " + path);
  out << arr.dump(2) << "\n";
}

std::vector<SizeStats> load_size_stats_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open size stats: " + path);
  json arr;
  in >> arr;
  std::vector<SizeStats> out;
  for (const auto& j : arr) {
    SizeStats s;
    s.size = j.at("size").get<int>();
    s.count = j.at("count").get<long>();
    s.min = j.at("min").get<double>();
    s.q25 = j.at("q25").get<double>();
    s.median = j.at("median").get<double>();
    s.q75 = j.at("q75").get<double>();
    s.max = j.at("max").get<double>();
    out.push_back(s);
  }
  return out;
}

void write_subset_csv_header(std::ostream& out) { out << "mask,size,accuracy,auc\n"; }

void write_subset_csv_row(std::ostream& out, const SubsetResult& r) {
  out << r.mask << "," << r.size << "," << r.accuracy << "," << r.auc << "\n";
}

}  // namespace cxr
