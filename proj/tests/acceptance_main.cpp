// Acceptance suite. Criteria 1-8 are property-based and run hermetically on
// synthetic fixtures; 9-12 reproduce published-data experiments and run only
// when the datasets (and, where needed, precomputed features) are pointed to
// by environment variables:
//   CXR_INDIANA_ROOT, CXR_JSRT_ROOT, CXR_SHENZHEN_ROOT
//   CXR_INDIANA_FEATURES, CXR_SHENZHEN_FEATURES  (store:<csv> weight sources)
// Prints one line per criterion; exit code 0 iff no criterion failed
// (skipped dataset-conditional criteria do not fail the suite).

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <vector>

#include "cxr/atlas.hpp"
#include "cxr/backbone.hpp"
#include "cxr/common.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/experiment.hpp"
#include "cxr/heads.hpp"
#include "cxr/manifest.hpp"
#include "cxr/metrics.hpp"
#include "cxr/occlusion.hpp"
#include "cxr/radon.hpp"
#include "cxr/rule_features.hpp"
#include "cxr/splits.hpp"
#include "cxr/svm.hpp"
#include "fixtures.hpp"

using namespace cxr;

namespace {

int failures = 0;
int passes = 0;
int skips = 0;

void report(int index, const std::string& name, const std::function<void()>& body) {
  try {
    body();
    std::cout << "[PASS] criterion " << index << ": " << name << "\n";
    ++passes;
  } catch (const std::exception& e) {
    std::cout << "[FAIL] criterion " << index << ": " << name << " -- " << e.what() << "\n";
    ++failures;
  }
}

void skip(int index, const std::string& name, const std::string& why) {
  std::cout << "[SKIP] criterion " << index << ": " << name << " -- " << why << "\n";
  ++skips;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

double mann_whitney_auc(const std::vector<ProbabilityRecord>& records) {
  double wins = 0.0;
  long pairs = 0;
  for (const auto& p : records) {
    if (p.true_label != 1) continue;
    for (const auto& n : records) {
      if (n.true_label != 0) continue;
      ++pairs;
      if (p.p_abnormal > n.p_abnormal)
        wins += 1.0;
      else if (p.p_abnormal == n.p_abnormal)
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

const char* env(const char* name) { return std::getenv(name); }

// --- criteria 1-8 ---------------------------------------------------------

void criterion1_auc_oracle() {
  std::mt19937_64 rng(1001);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 199);
    auto records = testfx::random_records(n, rng());
    // quantize some scores to force ties
    if (trial % 3 == 0)
      for (auto& r : records) r.p_abnormal = std::round(r.p_abnormal * 8.0) / 8.0;
    const double trapezoid = roc_auc(records).second;
    const double oracle = mann_whitney_auc(records);
    require(std::abs(trapezoid - oracle) <= 1e-9,
            "AUC mismatch: trapezoid " + std::to_string(trapezoid) + " vs pairs " +
                std::to_string(oracle));
  }
}

void criterion2_metric_identities() {
  std::mt19937_64 rng(1002);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionCounts c;
    c.tp = static_cast<long>(rng() % 300);
    c.fn = static_cast<long>(rng() % 300) + (c.tp == 0 ? 1 : 0);
    c.tn = static_cast<long>(rng() % 300);
    c.fp = static_cast<long>(rng() % 300) + (c.tn == 0 ? 1 : 0);
    const MetricsReport r = classification_metrics(c);
    const double sens = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    const double fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
    require(r.sensitivity == sens, "Eq.1 sensitivity mismatch");
    require(1.0 - r.specificity == fpr || std::abs((1.0 - r.specificity) - fpr) < 1e-15,
            "Eq.2 FPR mismatch");
  }
  // balanced identity, exact
  for (int trial = 0; trial < 1000; ++trial) {
    const long n = 1 + static_cast<long>(rng() % 400);
    ConfusionCounts c;
    c.tp = static_cast<long>(rng() % (n + 1));
    c.fn = n - c.tp;
    c.tn = static_cast<long>(rng() % (n + 1));
    c.fp = n - c.tn;
    if (c.tp + c.fn == 0 || c.tn + c.fp == 0) continue;
    const MetricsReport r = classification_metrics(c);
    require(r.accuracy == (r.sensitivity + r.specificity) / 2.0,
            "balanced identity not exact");
  }
}

void criterion3_ensemble_algebra() {
  std::mt19937_64 rng(1003);
  const int n_images = 40;
  std::vector<int> labels(n_images);
  for (int i = 0; i < n_images; ++i) labels[i] = i < 2 ? i : static_cast<int>(rng() % 2);
  std::vector<std::vector<ProbabilityRecord>> per_model;
  for (int m = 0; m < 6; ++m) {
    char id[8];
    std::snprintf(id, sizeof(id), "m%02d", m);
    std::vector<double> probs;
    for (int i = 0; i < n_images; ++i)
      probs.push_back(static_cast<double>((rng() >> 11) % 10001) / 10000.0);
    per_model.push_back(testfx::make_records(probs, labels, id));
  }
  const EnsemblePool pool = make_pool(per_model);

  // singleton bit-exact
  for (int m = 0; m < pool.size(); ++m) {
    const auto avg = average_probabilities(pool, {pool.model_ids[m]});
    for (int i = 0; i < pool.n_images(); ++i)
      require(avg[i].p_abnormal == pool.probs[m][i] && avg[i].image_id == pool.image_ids[i] &&
                  avg[i].true_label == pool.labels[i],
              "singleton ensemble differs from its member");
  }

  // permutation invariance over 100 random subsets
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> subset = pool.model_ids;
    deterministic_shuffle(subset, rng);
    subset.resize(1 + rng() % subset.size());
    std::vector<std::string> shuffled = subset;
    deterministic_shuffle(shuffled, rng);
    const auto a = average_probabilities(pool, subset);
    const auto b = average_probabilities(pool, shuffled);
    for (size_t i = 0; i < a.size(); ++i)
      require(a[i].p_abnormal == b[i].p_abnormal, "subset order changed the average");
  }

  // pool of 3 -> exactly 7 subset results
  const EnsemblePool three =
      make_pool({per_model[0], per_model[1], per_model[2]});
  require(evaluate_all_subsets(three, 0.5).size() == 7, "2^3-1 subsets expected");
}

void criterion4_occlusion() {
  const int side = 224;
  const Image img(side, side, 255.0f);
  const int r0 = 72, r1 = 151;  // centered 80x80 target square
  const Scorer scorer = [r0, r1](const Image& im) {
    double sum = 0.0;
    long n = 0;
    for (int y = r0; y <= r1; ++y)
      for (int x = r0; x <= r1; ++x) {
        sum += im.at(y, x);
        ++n;
      }
    return sum / (static_cast<double>(n) * im.max_value);
  };

  for (int stride : {8, 16, 20}) {
    OcclusionConfig config;
    config.patch_side = 40;
    config.stride = stride;
    const HeatMap map = occlusion_map(img, "sq", scorer, config);
    const Mask marked = binarize_lowest_fraction(map, 0.20);
    double cy = 0.0, cx = 0.0;
    long n = 0;
    for (int r = 0; r < map.rows; ++r)
      for (int c = 0; c < map.cols; ++c)
        if (marked.at(r, c)) {
          cy += map.ys[r] + config.patch_side / 2.0;
          cx += map.xs[c] + config.patch_side / 2.0;
          ++n;
        }
    require(n > 0, "no cells marked");
    cy /= static_cast<double>(n);
    cx /= static_cast<double>(n);
    require(cy >= r0 && cy <= r1 && cx >= r0 && cx <= r1,
            "stride " + std::to_string(stride) + ": centroid (" + std::to_string(cy) + "," +
                std::to_string(cx) + ") outside the target square");
  }

  OcclusionConfig config;
  config.patch_side = 40;
  config.stride = 16;
  const HeatMap flat = occlusion_map(img, "flat", [](const Image&) { return 0.31; }, config);
  for (double v : flat.p) require(v == 0.31, "constant scorer did not yield a flat map");
}

void criterion5_rule_geometry() {
  auto build = [](int scale) {
    const int w = 120 * scale, h = 60 * scale;
    Segmentation seg;
    seg.lung_left = Mask(w, h);
    seg.lung_right = Mask(w, h);
    seg.heart = Mask(w, h);
    for (int y = 0; y < 40 * scale; ++y) {
      for (int x = 0; x < 20 * scale; ++x) seg.lung_left.at(y, x) = 1;
      for (int x = 80 * scale; x < 100 * scale; ++x) seg.lung_right.at(y, x) = 1;
    }
    for (int y = 10 * scale; y < 30 * scale; ++y)
      for (int x = 40 * scale; x < 60 * scale; ++x) seg.heart.at(y, x) = 1;
    return seg;
  };
  const RuleFeatures f1 = compute_rule_features(build(1));
  require(f1.ctr_1d == 0.2, "ctr_1d != 0.2 exactly");
  require(f1.ctar == 0.25, "ctar != 0.25 exactly");

  const RuleFeatures a = compute_rule_features(build(4));  // 480x240 >= 256^2 scale
  const RuleFeatures b = compute_rule_features(build(8));
  require(std::abs(b.ctr_1d - a.ctr_1d) / a.ctr_1d <= 0.02, "ctr_1d drifts > 2% under 2x");
  require(std::abs(b.ctr_2d - a.ctr_2d) / a.ctr_2d <= 0.02, "ctr_2d drifts > 2% under 2x");
  require(std::abs(b.ctar - a.ctar) / a.ctar <= 0.02, "ctar drifts > 2% under 2x");
}

void criterion6_bhattacharyya_radon() {
  std::mt19937_64 rng(1006);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 24);
    std::vector<double> p(n), q(n);
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] = static_cast<double>(1 + rng() % 997);
      q[i] = static_cast<double>(1 + rng() % 997);
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    require(bhattacharyya_distance(p, q) == bhattacharyya_distance(q, p),
            "distance not symmetric");
    require(bhattacharyya_distance(p, p) == 0.0, "d(p,p) != 0");
    if (p != q)
      require(bhattacharyya_distance(p, q) > 0.0, "zero distance for unequal inputs");
  }

  const Image img = testfx::make_noise_image(8, 8, 1006);
  double total = 0.0;
  for (float v : img.px) total += v;
  const RadonSignature sig = radon_signature(img, {0.0, 90.0}, "r");
  for (int x = 0; x < 8; ++x) {
    double col = 0.0;
    for (int y = 0; y < 8; ++y) col += img.at(y, x);
    require(std::abs(sig.projections[0][x] - col / total) <= 1e-12,
            "0-degree projection is not the column sums");
  }
  for (int y = 0; y < 8; ++y) {
    double row = 0.0;
    for (int x = 0; x < 8; ++x) row += img.at(y, x);
    require(std::abs(sig.projections[1][y] - row / total) <= 1e-12,
            "90-degree projection is not the row sums");
  }
}

void criterion7_determinism() {
  namespace fs = std::filesystem;
  testfx::TempDir data("cxr_acc_data");
  testfx::write_synthetic_dataset(data.path(), 12, 12, "cardiomegaly", 48);
  testfx::TempDir out("cxr_acc_runs");

  ExperimentConfig config;
  config.dataset_root = data.str();
  config.source = "synthetic";
  config.abnormality = "cardiomegaly";
  config.head.epochs = 8;
  config.n_train = 8;
  config.n_test = 3;
  config.n_seeds = 2;
  config.ensemble_enabled = true;
  config.ensemble_members = 3;
  config.subset_study = true;

  config.output_dir = (out.path() / "run1").string();
  run_all(config);
  config.output_dir = (out.path() / "run2").string();
  run_all(config);

  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(out.path() / "run1")) {
    if (!e.is_regular_file() || e.path().extension() != ".json") continue;
    if (e.path().filename() == "config.resolved.json") continue;  // differs by output_dir
    const auto rel = fs::relative(e.path(), out.path() / "run1");
    std::ifstream a(e.path(), std::ios::binary);
    std::ifstream b(out.path() / "run2" / rel, std::ios::binary);
    require(b.good(), "missing artifact in second run: " + rel.string());
    const std::string sa((std::istreambuf_iterator<char>(a)),
                         std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)),
                         std::istreambuf_iterator<char>());
    if (e.path().filename() == "run_manifest.json") continue;  // config hash covers out dir
    require(sa == sb, "metric JSON differs between runs: " + rel.string());
    ++compared;
  }
  require(compared >= 8, "too few artifacts compared");
}

void criterion8_operating_point() {
  const std::vector<double> probs = {0.99, 0.97, 0.93, 0.9, 0.88, 0.82, 0.8, 0.72, 0.65, 0.55,
                                     0.85, 0.7,  0.6,  0.5, 0.45, 0.4,  0.3, 0.25, 0.2,  0.1};
  std::vector<int> labels(20, 0);
  for (int i = 0; i < 10; ++i) labels[i] = 1;
  const auto records = testfx::make_records(probs, labels);
  const auto [curve, auc] = roc_auc(records);

  const OperatingPoint op = operating_point(curve, OperatingTarget::sensitivity, 0.98);
  require(op.sensitivity >= 0.98, "target sensitivity not met");

  // exhaustive threshold scan oracle
  double best_spec = -1.0;
  double best_threshold = 0.0;
  std::vector<double> candidates = probs;
  candidates.push_back(2.0);  // above every score
  for (double t : candidates) {
    long tp = 0, fn = 0, tn = 0, fp = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
      const bool pred = probs[i] >= t;
      if (labels[i] == 1)
        pred ? ++tp : ++fn;
      else
        pred ? ++fp : ++tn;
    }
    const double sens = static_cast<double>(tp) / (tp + fn);
    const double spec = static_cast<double>(tn) / (tn + fp);
    if (sens >= 0.98 && (spec > best_spec || (spec == best_spec && t > best_threshold))) {
      best_spec = spec;
      best_threshold = t;
    }
  }
  require(op.specificity == best_spec,
          "operating point specificity " + std::to_string(op.specificity) +
              " differs from scan " + std::to_string(best_spec));
  require(op.threshold == best_threshold, "tie-break not toward the higher threshold");
}

// --- criteria 9-12 (dataset-conditional) -----------------------------------

std::string weights_for(const char* features_env) {
  const char* store = env(features_env);
  if (store) return std::string("store:") + store;
  return "";
}

void criterion9_cardiomegaly_nine_seeds(const std::string& indiana_root,
                                        const std::string& weights) {
  const DatasetManifest manifest = load_manifest(indiana_root, Source::indiana);
  BackboneSpec spec;
  spec.family = Family::resnet152;  // res4b35 tap by default
  const MultiSeedResult r = run_multi_seed(manifest, "cardiomegaly", spec, weights, HeadConfig{},
                                           9, 0, 282, 50, 0.5);
  require(std::abs(r.aggregate.accuracy.mean - 0.8803) <= 0.05,
          "mean accuracy " + std::to_string(r.aggregate.accuracy.mean) +
              " outside 0.8803 +- 0.05");
  require(r.aggregate.auc.mean >= 0.85,
          "mean AUC " + std::to_string(r.aggregate.auc.mean) + " < 0.85");
}

void criterion10_cardiomegaly_ensemble(const std::string& indiana_root,
                                       const std::string& weights) {
  const DatasetManifest manifest = load_manifest(indiana_root, Source::indiana);
  BackboneSpec spec;
  spec.family = Family::resnet152;
  const SplitSpec split = make_balanced_split(manifest, "cardiomegaly", 282, 50, 0);
  std::vector<std::vector<ProbabilityRecord>> members;
  std::vector<ImageRecord> train_records, test_records;
  for (const auto& id : split.train_ids()) train_records.push_back(*manifest.find(id));
  for (const auto& id : split.test_ids()) test_records.push_back(*manifest.find(id));
  const auto train_features = extract_features(train_records, spec, weights);
  const auto test_features = extract_features(test_records, spec, weights);
  std::vector<int> train_labels, test_labels;
  for (const auto& r : train_records) train_labels.push_back(r.has_label("cardiomegaly"));
  for (const auto& r : test_records) test_labels.push_back(r.has_label("cardiomegaly"));
  for (int m = 0; m < 6; ++m) {
    HeadConfig config;
    config.seed = 1000 + m;
    const TrainedHead head = train_head(train_features, train_labels, config, spec);
    char id[8];
    std::snprintf(id, sizeof(id), "m%02d", m);
    members.push_back(predict_proba(head, test_features, test_labels, id));
  }
  const EnsemblePool pool = make_pool(members);
  const auto averaged = average_probabilities(pool, pool.model_ids);
  const MetricsReport report = evaluate_records(averaged, 0.5);
  require(report.accuracy >= 0.88, "ensemble accuracy " + std::to_string(report.accuracy));
  require(report.auc >= 0.93, "ensemble AUC " + std::to_string(report.auc));
}

void criterion11_rule_baseline(const std::string& indiana_root, const std::string& jsrt_root) {
  const DatasetManifest manifest = load_manifest(indiana_root, Source::indiana);
  const SplitSpec split = make_balanced_split(manifest, "cardiomegaly", 282, 50, 0);
  const std::vector<AtlasEntry> atlas = load_atlas(jsrt_root, 256);
  const auto angles = default_angle_grid();
  std::vector<Image> atlas_images;
  std::vector<std::string> atlas_ids;
  for (const auto& e : atlas) {
    atlas_images.push_back(e.image);
    atlas_ids.push_back(e.id);
  }
  const auto atlas_sigs = radon_signatures(atlas_images, angles, atlas_ids);
  auto features_for = [&](const std::vector<std::string>& ids) {
    std::vector<RuleFeatures> features(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
      Image img = load_image(manifest.find(ids[i])->path);
      img = resize_bilinear(img, 256, 256);
      const auto ranked_ids =
          rank_similar_atlases(radon_signature(img, angles, ids[i]), atlas_sigs, 5);
      std::vector<AtlasEntry> ranked;
      for (const auto& rid : ranked_ids)
        for (const auto& e : atlas)
          if (e.id == rid) ranked.push_back(e);
      features[i] =
          compute_rule_features(transfer_segmentation(img, ids[i], ranked,
                                                      default_correspondence()));
    }
    return features;
  };
  const auto train_ids = split.train_ids();
  const auto test_ids = split.test_ids();
  std::vector<int> train_labels, test_labels;
  for (const auto& id : train_ids)
    train_labels.push_back(manifest.find(id)->has_label("cardiomegaly"));
  for (const auto& id : test_ids)
    test_labels.push_back(manifest.find(id)->has_label("cardiomegaly"));
  const RuleClassifier clf = train_rule_classifier(features_for(train_ids), train_labels);
  const auto records = predict_rule(clf, test_ids, features_for(test_ids), test_labels, "rule");
  const MetricsReport report = evaluate_records(records, 0.5);
  require(std::abs(report.accuracy - 0.756) <= 0.06,
          "rule-based accuracy " + std::to_string(report.accuracy) + " outside 0.756 +- 0.06");
}

void criterion12_tb_ensemble(const std::string& shenzhen_root, const std::string& weights) {
  const DatasetManifest manifest = load_manifest(shenzhen_root, Source::shenzhen);
  BackboneSpec spec;
  spec.family = Family::resnet152;
  const SplitSpec split = make_balanced_split(manifest, "tuberculosis", 250, 50, 0);
  std::vector<ImageRecord> train_records, test_records;
  for (const auto& id : split.train_ids()) train_records.push_back(*manifest.find(id));
  for (const auto& id : split.test_ids()) test_records.push_back(*manifest.find(id));
  const auto train_features = extract_features(train_records, spec, weights);
  const auto test_features = extract_features(test_records, spec, weights);
  std::vector<int> train_labels, test_labels;
  for (const auto& r : train_records) train_labels.push_back(r.has_label("tuberculosis"));
  for (const auto& r : test_records) test_labels.push_back(r.has_label("tuberculosis"));
  std::vector<std::vector<ProbabilityRecord>> members;
  for (int m = 0; m < 6; ++m) {
    HeadConfig config;
    config.seed = 2000 + m;
    const TrainedHead head = train_head(train_features, train_labels, config, spec);
    char id[8];
    std::snprintf(id, sizeof(id), "m%02d", m);
    members.push_back(predict_proba(head, test_features, test_labels, id));
  }
  const auto averaged = average_probabilities(make_pool(members),
                                              {"m00", "m01", "m02", "m03", "m04", "m05"});
  const auto [tuned_threshold, tuned_acc] = tune_threshold(averaged);
  const MetricsReport report = evaluate_records(averaged, tuned_threshold);
  require(report.accuracy >= 0.85, "TB tuned accuracy " + std::to_string(report.accuracy));
  require(report.auc >= 0.90, "TB AUC " + std::to_string(report.auc));
}

}  // namespace

int main() {
  report(1, "AUC trapezoid equals exhaustive pair counting (500 fixtures, 1e-9)",
         criterion1_auc_oracle);
  report(2, "metric identities and exact balanced accuracy", criterion2_metric_identities);
  report(3, "ensemble algebra: singleton identity, permutation invariance, 2^3-1",
         criterion3_ensemble_algebra);
  report(4, "occlusion localizes the synthetic target square at strides 8/16/20",
         criterion4_occlusion);
  report(5, "rule-feature geometry exact on rectangles, stable under 2x scaling",
         criterion5_rule_geometry);
  report(6, "Bhattacharyya symmetry/zero-iff-equal and exact 0/90-degree radon sums",
         criterion6_bhattacharyya_radon);
  report(7, "fixed-seed pipeline reproduces byte-identical metric JSONs",
         criterion7_determinism);
  report(8, "operating point matches the exhaustive threshold scan", criterion8_operating_point);

  const char* indiana = env("CXR_INDIANA_ROOT");
  const char* jsrt = env("CXR_JSRT_ROOT");
  const char* shenzhen = env("CXR_SHENZHEN_ROOT");
  const std::string indiana_weights = weights_for("CXR_INDIANA_FEATURES");
  const std::string shenzhen_weights = weights_for("CXR_SHENZHEN_FEATURES");

  if (indiana && !indiana_weights.empty())
    report(9, "cardiomegaly resnet152 nine seeds within 88.03 +- 5, AUC >= 0.85",
           [&] { criterion9_cardiomegaly_nine_seeds(indiana, indiana_weights); });
  else
    skip(9, "cardiomegaly resnet152 nine seeds",
         "set CXR_INDIANA_ROOT and CXR_INDIANA_FEATURES");

  if (indiana && !indiana_weights.empty())
    report(10, "cardiomegaly 6-model ensemble accuracy >= 88%, AUC >= 0.93",
           [&] { criterion10_cardiomegaly_ensemble(indiana, indiana_weights); });
  else
    skip(10, "cardiomegaly ensemble", "set CXR_INDIANA_ROOT and CXR_INDIANA_FEATURES");

  if (indiana && jsrt)
    report(11, "rule-based baseline within 75.6 +- 6 on the same split",
           [&] { criterion11_rule_baseline(indiana, jsrt); });
  else
    skip(11, "rule-based baseline", "set CXR_INDIANA_ROOT and CXR_JSRT_ROOT");

  if (shenzhen && !shenzhen_weights.empty())
    report(12, "Shenzhen TB ensemble with tuned threshold: accuracy >= 85%, AUC >= 0.90",
           [&] { criterion12_tb_ensemble(shenzhen, shenzhen_weights); });
  else
    skip(12, "Shenzhen TB ensemble", "set CXR_SHENZHEN_ROOT and CXR_SHENZHEN_FEATURES");

  std::cout << passes << " passed, " << failures << " failed, " << skips
            << " skipped (dataset-conditional)\n";
  return failures == 0 ? 0 : 1;
}
