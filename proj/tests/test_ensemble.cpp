#include <doctest.h>

#include <algorithm>
#include <random>

#include "cxr/common.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/metrics.hpp"
#include "fixtures.hpp"

using namespace cxr;

namespace {

EnsemblePool pool_fixture(int models, int images, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> labels(images);
  for (int i = 0; i < images; ++i) labels[i] = i < images / 2 ? 1 : 0;
  std::vector<std::vector<ProbabilityRecord>> per_model;
  for (int m = 0; m < models; ++m) {
    std::vector<ProbabilityRecord> records;
    char id[16];
    std::snprintf(id, sizeof(id), "m%02d", m);
    for (int i = 0; i < images; ++i) {
      // abnormal images lean high, normal lean low, with noise
      double base = labels[i] == 1 ? 0.7 : 0.3;
      double p = base + (static_cast<double>((rng() >> 11) % 1000) / 1000.0 - 0.5) * 0.5;
      records.push_back({"img" + std::to_string(i), id, std::clamp(p, 0.0, 1.0), labels[i]});
    }
    per_model.push_back(std::move(records));
  }
  return make_pool(per_model);
}

}  // namespace

TEST_CASE("make_pool validates coverage and labels") {
  auto a = testfx::make_records({0.2, 0.8}, {0, 1}, "a");
  auto b = testfx::make_records({0.4, 0.6}, {0, 1}, "b");

  const EnsemblePool pool = make_pool({a, b});
  CHECK(pool.size() == 2);
  CHECK(pool.n_images() == 2);

  SUBCASE("missing image -> coverage error naming it") {
    auto short_b = b;
    short_b.pop_back();
    CHECK_THROWS_AS(make_pool({a, short_b}), ValidationError);
    auto renamed = b;
    renamed[1].image_id = "imgX";
    try {
      make_pool({a, renamed});
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK((std::string(e.what()).find("img1") != std::string::npos ||
             std::string(e.what()).find("imgX") != std::string::npos));
    }
  }
  SUBCASE("label disagreement is rejected") {
    auto flipped = b;
    flipped[0].true_label = 1;
    CHECK_THROWS_AS(make_pool({a, flipped}), ValidationError);
  }
}

TEST_CASE("averaging: identity, midpoint, brute-force oracle, permutation invariance") {
  const EnsemblePool pool = pool_fixture(6, 20, 42);

  SUBCASE("singleton equals the member bit-exactly") {
    const auto avg = average_probabilities(pool, {pool.model_ids[2]});
    for (int i = 0; i < pool.n_images(); ++i) {
      CHECK(avg[i].p_abnormal == pool.probs[2][i]);
      CHECK(avg[i].image_id == pool.image_ids[i]);
      CHECK(avg[i].true_label == pool.labels[i]);
    }
  }

  SUBCASE("two members at 0.2 and 0.8 average to 0.5") {
    auto a = testfx::make_records({0.2}, {1}, "a");
    auto b = testfx::make_records({0.8}, {1}, "b");
    const EnsemblePool mini = make_pool({a, b});
    const auto avg = average_probabilities(mini, {"a", "b"});
    CHECK(avg[0].p_abnormal == 0.5);
  }

  SUBCASE("6-member subset matches a direct re-average") {
    const auto avg = average_probabilities(pool, pool.model_ids);
    for (int i = 0; i < pool.n_images(); ++i) {
      double sum = 0.0;
      for (int m = 0; m < 6; ++m) sum += pool.probs[m][i];
      CHECK(avg[i].p_abnormal == doctest::Approx(sum / 6.0).epsilon(1e-15));
      CHECK(avg[i].p_abnormal >= 0.0);
      CHECK(avg[i].p_abnormal <= 1.0);
    }
  }

  SUBCASE("permutation invariance over random subsets") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::string> subset = pool.model_ids;
      deterministic_shuffle(subset, rng);
      subset.resize(1 + rng() % subset.size());
      std::vector<std::string> shuffled = subset;
      deterministic_shuffle(shuffled, rng);
      const auto a = average_probabilities(pool, subset);
      const auto b = average_probabilities(pool, shuffled);
      for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].p_abnormal == b[i].p_abnormal);
    }
  }

  SUBCASE("unknown member and empty subset are rejected") {
    CHECK_THROWS_AS(average_probabilities(pool, {"nope"}), ValidationError);
    CHECK_THROWS_AS(average_probabilities(pool, {}), ValidationError);
  }
}

TEST_CASE("a pool of 3 yields exactly 7 subsets in (size, lex) order") {
  const EnsemblePool pool = pool_fixture(3, 10, 1);
  const auto results = evaluate_all_subsets(pool, 0.5);
  REQUIRE(results.size() == 7);
  CHECK(results[0].mask == 0b001);
  CHECK(results[1].mask == 0b010);
  CHECK(results[2].mask == 0b100);
  CHECK(results[3].mask == 0b011);
  CHECK(results[4].mask == 0b101);
  CHECK(results[5].mask == 0b110);
  CHECK(results[6].mask == 0b111);
  for (const auto& r : results) {
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(r.auc >= 0.0);
    CHECK(r.auc <= 1.0);
  }

  // values match direct evaluation of the averaged records
  for (const auto& r : results) {
    const auto avg = average_probabilities(pool, r.member_ids(pool));
    const MetricsReport direct = evaluate_records(avg, 0.5);
    CHECK(r.accuracy == direct.accuracy);
    CHECK(r.auc == direct.auc);
  }
}

TEST_CASE("singleton subset AUC equals the metrics module AUC bit-exactly") {
  const EnsemblePool pool = pool_fixture(4, 30, 9);
  const auto results = evaluate_all_subsets(pool, 0.5);
  for (int m = 0; m < pool.size(); ++m) {
    std::vector<ProbabilityRecord> records;
    for (int i = 0; i < pool.n_images(); ++i)
      records.push_back({pool.image_ids[i], pool.model_ids[m], pool.probs[m][i],
                         pool.labels[i]});
    const double auc = roc_auc(records).second;
    const auto it = std::find_if(results.begin(), results.end(), [m](const SubsetResult& r) {
      return r.mask == (1u << m);
    });
    REQUIRE(it != results.end());
    CHECK(it->auc == auc);
  }
}

TEST_CASE("pool larger than the cap is a capacity error") {
  const EnsemblePool pool = pool_fixture(25, 4, 2);
  CHECK_THROWS_AS(evaluate_all_subsets(pool, 0.5), ValidationError);
  CHECK_THROWS_AS(scan_subset_stats(pool, 0.5), ValidationError);
  // sampling mode still works
  const auto stats = sample_subset_stats(pool, 0.5, 20, 0);
  CHECK(stats.size() == 25);
}

TEST_CASE("per-size quartiles match an independent percentile oracle") {
  const EnsemblePool pool = pool_fixture(5, 16, 3);
  const auto results = evaluate_all_subsets(pool, 0.5);
  const auto stats = subset_size_stats(results, SubsetMetric::accuracy);
  REQUIRE(stats.size() == 5);

  // oracle: R-7 linear interpolation percentile
  auto oracle = [](std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    const double h = q * (v.size() - 1);
    const size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (h - lo) * (v[lo + 1] - v[lo]);
  };
  for (const auto& s : stats) {
    std::vector<double> values;
    for (const auto& r : results)
      if (r.size == s.size) values.push_back(r.accuracy);
    CHECK(s.count == static_cast<long>(values.size()));
    CHECK(s.q25 == doctest::Approx(oracle(values, 0.25)).epsilon(1e-12));
    CHECK(s.median == doctest::Approx(oracle(values, 0.50)).epsilon(1e-12));
    CHECK(s.q75 == doctest::Approx(oracle(values, 0.75)).epsilon(1e-12));
    CHECK(s.min == *std::min_element(values.begin(), values.end()));
    CHECK(s.max == *std::max_element(values.begin(), values.end()));
  }

  SUBCASE("degenerate stats fixtures") {
    SubsetResult a{1, 1, 0.8, 0.0}, b{2, 1, 0.9, 0.0}, c{4, 1, 1.0, 0.0};
    const auto one_size = subset_size_stats({a, b, c}, SubsetMetric::accuracy);
    REQUIRE(one_size.size() == 1);
    CHECK(one_size[0].median == 0.9);

    SubsetResult lone{3, 2, 0.7, 0.0};
    const auto single = subset_size_stats({lone}, SubsetMetric::accuracy);
    CHECK(single[0].min == 0.7);
    CHECK(single[0].q25 == 0.7);
    CHECK(single[0].median == 0.7);
    CHECK(single[0].q75 == 0.7);
    CHECK(single[0].max == 0.7);
  }
}

TEST_CASE("parallel scan equals the serial reference and the materialized route") {
  const EnsemblePool pool = pool_fixture(8, 24, 5);
  const auto par = scan_subset_stats(pool, 0.5, SubsetMetric::accuracy);
  const auto ser = scan_subset_stats_serial(pool, 0.5, SubsetMetric::accuracy);
  const auto mat = subset_size_stats(evaluate_all_subsets(pool, 0.5), SubsetMetric::accuracy);
  REQUIRE(par.size() == ser.size());
  REQUIRE(par.size() == mat.size());
  for (size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].count == ser[i].count);
    CHECK(par[i].min == ser[i].min);
    CHECK(par[i].q25 == ser[i].q25);
    CHECK(par[i].median == ser[i].median);
    CHECK(par[i].q75 == ser[i].q75);
    CHECK(par[i].max == ser[i].max);
    CHECK(par[i].median == mat[i].median);
    CHECK(par[i].q25 == mat[i].q25);
  }

  const auto par_auc = scan_subset_stats(pool, 0.5, SubsetMetric::auc);
  const auto ser_auc = scan_subset_stats_serial(pool, 0.5, SubsetMetric::auc);
  for (size_t i = 0; i < par_auc.size(); ++i) {
    CHECK(par_auc[i].median == ser_auc[i].median);
    CHECK(par_auc[i].max == ser_auc[i].max);
  }
}

TEST_CASE("tune_threshold matches an exhaustive oracle and tie-breaks toward 0.5") {
  SUBCASE("10-record fixture vs oracle") {
    const auto records = testfx::make_records(
        {0.9, 0.8, 0.75, 0.6, 0.45, 0.55, 0.4, 0.3, 0.2, 0.1},
        {1, 1, 1, 1, 1, 0, 0, 0, 0, 0});
    const auto [t, acc] = tune_threshold(records);
    double best_acc = -1.0;
    for (const auto& r : records) {
      const MetricsReport rep =
          classification_metrics(confusion_at_threshold(records, r.p_abnormal));
      best_acc = std::max(best_acc, rep.accuracy);
    }
    CHECK(acc == best_acc);
    const MetricsReport at_t = classification_metrics(confusion_at_threshold(records, t));
    CHECK(at_t.accuracy == best_acc);
  }

  SUBCASE("separated records pick the candidate closest to 0.5") {
    const auto records = testfx::make_records({0.9, 0.85, 0.15, 0.1}, {1, 1, 0, 0});
    const auto [t, acc] = tune_threshold(records);
    CHECK(acc == 1.0);
    CHECK(t == 0.85);  // the only candidate threshold separating both classes
  }

  SUBCASE("an improvement over 0.5 is found when it exists") {
    // at t=0.5: one negative at 0.55 is a false positive; t=0.6 fixes it
    const auto records = testfx::make_records({0.9, 0.8, 0.7, 0.62, 0.55, 0.3, 0.2, 0.1},
                                              {1, 1, 1, 1, 0, 0, 0, 0});
    const MetricsReport at_half = evaluate_records(records, 0.5);
    const auto [t, acc] = tune_threshold(records);
    CHECK(acc > at_half.accuracy);
    CHECK(t == 0.62);
  }

  SUBCASE("single class is rejected") {
    CHECK_THROWS_AS(tune_threshold(testfx::make_records({0.5, 0.6}, {1, 1})), ValidationError);
  }
}

TEST_CASE("size stats JSON round trip") {
  testfx::TempDir dir("cxr_stats");
  const EnsemblePool pool = pool_fixture(4, 12, 8);
  const auto stats = scan_subset_stats(pool, 0.5);
  const std::string path = (dir.path() / "stats.json").string();
  save_size_stats_json(stats, path);
  const auto back = load_size_stats_json(path);
  REQUIRE(back.size() == stats.size());
  for (size_t i = 0; i < stats.size(); ++i) {
    CHECK(back[i].size == stats[i].size);
    CHECK(back[i].count == stats[i].count);
    CHECK(back[i].median == stats[i].median);
  }
}
