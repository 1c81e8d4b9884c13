#include "cxr/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "cxr/atlas.hpp"
#include "cxr/backbone.hpp"
#include "cxr/common.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/experiment.hpp"
#include "cxr/external_scorer.hpp"
#include "cxr/feature_store.hpp"
#include "cxr/heads.hpp"
#include "cxr/manifest.hpp"
#include "cxr/metrics.hpp"
#include "cxr/occlusion.hpp"
#include "cxr/radon.hpp"
#include "cxr/report.hpp"
#include "cxr/rule_features.hpp"
#include "cxr/splits.hpp"
#include "cxr/svm.hpp"

namespace fs = std::filesystem;

namespace cxr {

namespace {

struct BackboneOpts {
  std::string family = "standin";
  std::string tap;
  int input_side = 0;
  std::string preprocessing = "scale_unit";
  std::string weights = "standin:42";

  void attach(CLI::App* cmd) {
    cmd->add_option("--backbone", family, "Backbone family")->capture_default_str();
    cmd->add_option("--tap", tap, "Tap layer (default: family default)");
    cmd->add_option("--input-side", input_side, "Backbone input side in pixels");
    cmd->add_option("--preprocessing", preprocessing, "mean_subtract or scale_unit")
        ->capture_default_str();
    cmd->add_option("--weights", weights,
                    "Weights locator: standin:<seed>, store:<csv> or exec:<command>")
        ->capture_default_str();
  }

  BackboneSpec spec() const {
    BackboneSpec b;
    b.family = family_from_string(family);
    b.tap_layer = tap;
    b.input_side = input_side;
    b.preprocessing = preprocessing_from_string(preprocessing);
    return b.resolved();
  }
};

std::vector<ImageRecord> records_for_ids(const DatasetManifest& manifest,
                                         const std::vector<std::string>& ids) {
  std::vector<ImageRecord> out;
  for (const auto& id : ids) {
    const ImageRecord* r = manifest.find(id);
    if (!r) throw ValidationError("id not present in manifest: " + id);
    out.push_back(*r);
  }
  return out;
}

std::vector<int> labels_for_ids(const DatasetManifest& manifest,
                                const std::vector<std::string>& ids,
                                const std::string& abnormality) {
  std::vector<int> labels;
  for (const auto& id : ids)
    labels.push_back(manifest.find(id)->has_label(abnormality) ? 1 : 0);
  return labels;
}

// Metrics print as tables do: percentages and AUC at two decimals. The stored
// JSON keeps full precision.
std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", fraction * 100.0);
  return buf;
}

std::string two_dp(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

int cmd_ingest(const std::string& root, const std::string& source, const std::string& out) {
  const DatasetManifest manifest = load_manifest(root, source_from_string(source));
  save_manifest_json(manifest, out);
  std::cout << "wrote " << manifest.records.size() << " records to " << out << "\n";
  return 0;
}

int cmd_extract(const std::string& manifest_path, const std::string& split_path,
                const BackboneOpts& backbone, const std::string& out,
                const std::string& cache_dir) {
  const DatasetManifest manifest = load_manifest_json(manifest_path);
  std::vector<ImageRecord> records;
  if (!split_path.empty()) {
    const SplitSpec split = load_split_json(split_path);
    records = records_for_ids(manifest, split.all_ids());
  } else {
    records = manifest.records;
  }
  const BackboneSpec spec = backbone.spec();
  const auto features = cache_dir.empty()
                            ? extract_features(records, spec, backbone.weights)
                            : extract_features_cached(records, spec, backbone.weights, cache_dir);
  save_feature_store(out, spec, features);
  std::cout << "wrote " << features.size() << " feature vectors (dim "
            << (features.empty() ? 0 : features.front().dim()) << ") to " << out << "\n";
  return 0;
}

int cmd_split(const std::string& manifest_path, const std::string& abnormality, int n_train,
              int n_test, uint64_t seed, bool include_lateral, const std::string& out) {
  const DatasetManifest manifest = load_manifest_json(manifest_path);
  const SplitSpec split =
      make_balanced_split(manifest, abnormality, n_train, n_test, seed, include_lateral);
  save_split_json(split, out);
  std::cout << "wrote split (" << split.train_pos.size() << "+" << split.train_neg.size()
            << " train, " << split.test_pos.size() << "+" << split.test_neg.size()
            << " test) to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& split_path,
              const BackboneOpts& backbone, const HeadConfig& head_config,
              const std::string& out_dir, double threshold) {
  const DatasetManifest manifest = load_manifest_json(manifest_path);
  const SplitSpec split = load_split_json(split_path);
  validate_split(split, &manifest);
  const BackboneSpec spec = backbone.spec();

  const auto train_ids = split.train_ids();
  const auto test_ids = split.test_ids();
  const auto train_features =
      extract_features(records_for_ids(manifest, train_ids), spec, backbone.weights);
  const auto test_features =
      extract_features(records_for_ids(manifest, test_ids), spec, backbone.weights);

  TrainedHead head = train_head(train_features,
                                labels_for_ids(manifest, train_ids, split.abnormality),
                                head_config, spec);
  head.split_ref = split_path;

  fs::create_directories(out_dir);
  save_head_json(head, (fs::path(out_dir) / "head.json").string());
  const auto records = predict_proba(head, test_features,
                                     labels_for_ids(manifest, test_ids, split.abnormality),
                                     "head_seed" + std::to_string(head_config.seed));
  save_probability_csv(records, (fs::path(out_dir) / "test_probs.csv").string());
  MetricsReport report = evaluate_records(records, threshold);
  save_metrics_json(report, (fs::path(out_dir) / "metrics.json").string());
  save_roc_csv(roc_auc(records).first, (fs::path(out_dir) / "roc.csv").string());
  std::cout << "accuracy " << pct(report.accuracy) << " auc " << two_dp(report.auc) << " -> "
            << out_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& manifest_path, const std::string& abnormality,
                 const BackboneOpts& backbone, const HeadConfig& head_config, int n_seeds,
                 uint64_t base_seed, int n_train, int n_test, double threshold,
                 const std::vector<int>& sizes, bool layer_study, const std::string& out_dir) {
  const DatasetManifest manifest = load_manifest_json(manifest_path);
  const BackboneSpec spec = backbone.spec();
  fs::create_directories(out_dir);

  if (layer_study) {
    const auto rows =
        run_layer_study(manifest, abnormality, spec.family, backbone.weights, head_config,
                        n_seeds, base_seed, n_train, n_test, threshold, spec.input_side);
    save_layer_study_json(rows, (fs::path(out_dir) / "layer_study.json").string());
    for (const auto& row : rows)
      std::cout << row.layer.name << ": accuracy " << pct(row.summary.accuracy.mean)
                << " +- " << pct(row.summary.accuracy.sd) << "\n";
    return 0;
  }
  if (!sizes.empty()) {
    const auto rows = run_size_sweep(manifest, abnormality, spec, backbone.weights, head_config,
                                     sizes, n_test, n_seeds, base_seed, threshold);
    save_size_sweep_json(rows, (fs::path(out_dir) / "size_sweep.json").string());
    for (const auto& row : rows)
      std::cout << "size " << row.train_size << ": accuracy "
                << pct(row.summary.accuracy.mean) << " +- " << pct(row.summary.accuracy.sd)
                << "\n";
    return 0;
  }

  const MultiSeedResult result =
      run_multi_seed(manifest, abnormality, spec, backbone.weights, head_config, n_seeds,
                     base_seed, n_train, n_test, threshold);
  for (const auto& run : result.runs) {
    const fs::path dir = fs::path(out_dir) / "seeds" / ("seed_" + std::to_string(run.seed));
    fs::create_directories(dir);
    save_split_json(run.split, (dir / "split.json").string());
    save_head_json(run.head, (dir / "head.json").string());
    save_probability_csv(run.test_records, (dir / "test_probs.csv").string());
    save_metrics_json(run.report, (dir / "metrics.json").string());
    save_roc_csv(roc_auc(run.test_records).first, (dir / "roc.csv").string());
  }
  save_summary_json(result.aggregate, (fs::path(out_dir) / "summary.json").string());
  std::cout << "accuracy " << pct(result.aggregate.accuracy.mean) << " +- "
            << pct(result.aggregate.accuracy.sd) << ", auc "
            << two_dp(result.aggregate.auc.mean) << " +- " << two_dp(result.aggregate.auc.sd)
            << " over " << n_seeds << " seeds -> " << out_dir << "\n";
  return 0;
}

int cmd_ensemble(const std::vector<std::string>& prob_files, double threshold, bool tune,
                 bool subsets, const std::string& subsets_csv, long sample_per_size,
                 uint64_t sample_seed, const std::string& out_dir) {
  if (prob_files.empty()) throw ValidationError("ensemble: no probability files given");
  std::vector<std::vector<ProbabilityRecord>> per_model;
  for (const auto& f : prob_files) per_model.push_back(load_probability_csv(f));
  const EnsemblePool pool = make_pool(per_model);
  fs::create_directories(out_dir);

  const auto averaged = average_probabilities(pool, pool.model_ids);
  save_probability_csv(averaged, (fs::path(out_dir) / "ensemble_probs.csv").string());
  MetricsReport report = evaluate_records(averaged, threshold);
  report.meta["members"] = std::to_string(pool.size());
  save_metrics_json(report, (fs::path(out_dir) / "metrics.json").string());
  save_roc_csv(roc_auc(averaged).first, (fs::path(out_dir) / "roc.csv").string());
  std::cout << "ensemble of " << pool.size() << ": accuracy " << pct(report.accuracy)
            << " auc " << two_dp(report.auc) << "\n";

  if (tune) {
    const auto [best_t, best_acc] = tune_threshold(averaged);
    MetricsReport tuned = evaluate_records(averaged, best_t);
    tuned.meta["tuned"] = "true";
    save_metrics_json(tuned, (fs::path(out_dir) / "metrics_tuned.json").string());
    std::cout << "tuned threshold " << best_t << ": accuracy " << pct(best_acc) << "\n";
  }

  if (subsets) {
    std::vector<SizeStats> stats;
    if (pool.size() <= kMaxExhaustivePool) {
      std::optional<std::ofstream> csv;
      if (!subsets_csv.empty()) {
        csv.emplace(subsets_csv);
        if (!*csv) throw IoError("cannot write subset CSV: " + subsets_csv);
        write_subset_csv_header(*csv);
      }
      stats = scan_subset_stats(pool, threshold, SubsetMetric::accuracy);
      if (csv) {
        for_each_subset(pool, threshold,
                        [&csv](const SubsetResult& r) { write_subset_csv_row(*csv, r); });
      }
    } else {
      stats = sample_subset_stats(pool, threshold, sample_per_size, sample_seed,
                                  SubsetMetric::accuracy);
      std::cout << "pool exceeds exhaustive cap; sampled " << sample_per_size
                << " subsets per size\n";
    }
    save_size_stats_json(stats, (fs::path(out_dir) / "subset_stats.json").string());
  }
  return 0;
}

int cmd_localize(const std::string& image, const std::string& head_path,
                 const BackboneOpts& backbone, const std::string& scorer_cmd,
                 const std::string& roi_path, int patch, int stride, double keep,
                 const std::string& basis, const std::string& out_dir) {
  const Image img = load_image(image);
  const std::string id = fs::path(image).stem().string();
  fs::create_directories(out_dir);

  Scorer scorer;
  std::unique_ptr<ExternalScorer> external;
  std::unique_ptr<TrainedHead> head;
  std::unique_ptr<StandInBackbone> net;
  std::unique_ptr<BackboneSpec> spec;
  bool parallel = true;
  if (!scorer_cmd.empty()) {
    external = std::make_unique<ExternalScorer>(scorer_cmd);
    const std::string probe = (fs::path(out_dir) / "scorer_probe.pgm").string();
    scorer = [&external, probe](const Image& im) {
      save_pgm(im, probe);
      return external->score_file(probe);
    };
    parallel = false;
  } else {
    if (head_path.empty())
      throw ValidationError("localize: need --head with an in-process backbone, or --scorer-cmd");
    head = std::make_unique<TrainedHead>(load_head_json(head_path));
    spec = std::make_unique<BackboneSpec>(backbone.spec());
    if (spec->family != Family::standin)
      throw ValidationError("localize: in-process scoring supports the standin family; use "
                            "--scorer-cmd for published backbones");
    net = std::make_unique<StandInBackbone>(
        WeightsSource::parse(backbone.weights, spec->family).seed);
    scorer = [&net, &head, &spec](const Image& im) {
      return head->probabilities(net->extract(im, *spec).values)[1];
    };
  }

  OcclusionConfig config;
  config.patch_side = patch;
  config.stride = stride;
  config.keep_fraction = keep;
  config.basis = basis == "area" ? FractionBasis::area : FractionBasis::cells;
  if (!roi_path.empty()) config.roi = load_mask(roi_path);
  const HeatMap map = parallel ? occlusion_map(img, id, scorer, config)
                               : occlusion_map_serial(img, id, scorer, config);

  const Mask grid = binarize_lowest_fraction(map, config.keep_fraction, config.basis,
                                             config.roi);

  save_heatmap(map, (fs::path(out_dir) / "heatmap.csv").string(),
               (fs::path(out_dir) / "heatmap.json").string());
  save_mask(grid, (fs::path(out_dir) / "grid_mask.pgm").string());
  render_overlay(img, map, grid, (fs::path(out_dir) / "overlay.png").string());
  save_pgm(project_to_pixels(map), (fs::path(out_dir) / "probability.pgm").string());
  save_histogram_json(heatmap_histogram(map), (fs::path(out_dir) / "histogram.json").string());
  const fs::path probe = fs::path(out_dir) / "scorer_probe.pgm";
  if (fs::exists(probe)) fs::remove(probe);
  std::cout << "baseline p " << map.baseline_p << ", grid " << map.rows << "x" << map.cols
            << " -> " << out_dir << "\n";
  return 0;
}

int cmd_rulebased(const std::string& atlas_root, const std::string& manifest_path,
                  const std::string& split_path, int resize_to, int k, bool save_masks,
                  double threshold, const std::string& out_dir) {
  const DatasetManifest manifest = load_manifest_json(manifest_path);
  const SplitSpec split = load_split_json(split_path);
  validate_split(split, &manifest);
  fs::create_directories(out_dir);

  const std::vector<AtlasEntry> atlas = load_atlas(atlas_root, resize_to);
  const int side = atlas.front().image.width;
  const auto angles = default_angle_grid();

  std::vector<Image> atlas_images;
  std::vector<std::string> atlas_ids;
  for (const auto& e : atlas) {
    atlas_images.push_back(e.image);
    atlas_ids.push_back(e.id);
  }
  const auto atlas_sigs = radon_signatures(atlas_images, angles, atlas_ids);
  const CorrespondenceFn correspondence = default_correspondence();

  auto features_for = [&](const std::vector<std::string>& ids) {
    std::vector<RuleFeatures> features(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
      const ImageRecord* rec = manifest.find(ids[i]);
      Image img = load_image(rec->path);
      if (img.width != side || img.height != side) img = resize_bilinear(img, side, side);
      const RadonSignature sig = radon_signature(img, angles, ids[i]);
      const auto ranked_ids = rank_similar_atlases(sig, atlas_sigs, k);
      std::vector<AtlasEntry> ranked;
      for (const auto& rid : ranked_ids)
        for (const auto& e : atlas)
          if (e.id == rid) ranked.push_back(e);
      const Segmentation seg = transfer_segmentation(img, ids[i], ranked, correspondence);
      if (save_masks) {
        const fs::path dir = fs::path(out_dir) / "segmentations" / ids[i];
        fs::create_directories(dir);
        save_mask(seg.lung_left, (dir / "lung_left.png").string());
        save_mask(seg.lung_right, (dir / "lung_right.png").string());
        save_mask(seg.heart, (dir / "heart.png").string());
      }
      features[i] = compute_rule_features(seg);
    }
    return features;
  };

  const auto train_ids = split.train_ids();
  const auto test_ids = split.test_ids();
  const auto train_labels = labels_for_ids(manifest, train_ids, split.abnormality);
  const auto test_labels = labels_for_ids(manifest, test_ids, split.abnormality);
  const auto train_features = features_for(train_ids);
  const auto test_features = features_for(test_ids);

  // persist features for inspection and fusion experiments
  {
    std::ofstream csv(fs::path(out_dir) / "rule_features.csv");
    csv << "image_id,ctr_1d,ctr_2d,ctar,label,split\n";
    csv.precision(12);
    for (size_t i = 0; i < train_ids.size(); ++i)
      csv << train_ids[i] << "," << train_features[i].ctr_1d << "," << train_features[i].ctr_2d
          << "," << train_features[i].ctar << "," << train_labels[i] << ",train\n";
    for (size_t i = 0; i < test_ids.size(); ++i)
      csv << test_ids[i] << "," << test_features[i].ctr_1d << "," << test_features[i].ctr_2d
          << "," << test_features[i].ctar << "," << test_labels[i] << ",test\n";
  }

  const RuleClassifier clf = train_rule_classifier(train_features, train_labels);
  save_rule_classifier_json(clf, (fs::path(out_dir) / "classifier.json").string());
  const auto records = predict_rule(clf, test_ids, test_features, test_labels, "rulebased");
  save_probability_csv(records, (fs::path(out_dir) / "test_probs.csv").string());
  MetricsReport report = evaluate_records(records, threshold);
  report.meta["model"] = "rulebased_svm";
  save_metrics_json(report, (fs::path(out_dir) / "metrics.json").string());
  save_roc_csv(roc_auc(records).first, (fs::path(out_dir) / "roc.csv").string());
  std::cout << "rule-based accuracy " << pct(report.accuracy) << " auc "
            << two_dp(report.auc) << " -> " << out_dir << "\n";
  return 0;
}

int cmd_tb(const std::string& root, const BackboneOpts& backbone, const HeadConfig& head_config,
           int n_train, int n_test, int n_seeds, uint64_t base_seed, int members,
           const std::string& out_dir) {
  ExperimentConfig config;
  config.dataset_root = root;
  config.source = "shenzhen";
  config.abnormality = "tuberculosis";
  config.backbone.family = family_from_string(backbone.family);
  config.backbone.tap_layer = backbone.tap;
  config.backbone.input_side = backbone.input_side;
  config.backbone.preprocessing = preprocessing_from_string(backbone.preprocessing);
  config.weights = backbone.weights;
  config.head = head_config;
  config.n_train = n_train;
  config.n_test = n_test;
  config.n_seeds = n_seeds;
  config.base_seed = base_seed;
  config.ensemble_enabled = true;
  config.ensemble_members = members;
  config.tune_threshold_enabled = true;
  config.output_dir = out_dir;
  run_all(config);
  std::cout << "tb pipeline -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Chest X-ray abnormality detection and localization harness"};
  app.require_subcommand(1);

  // ingest
  std::string root, source = "synthetic", out = "manifest.json";
  auto* ingest = app.add_subcommand("ingest", "Build a dataset manifest");
  ingest->add_option("--root", root, "Dataset root directory")->required();
  ingest->add_option("--source", source, "indiana, jsrt, shenzhen or synthetic")
      ->capture_default_str();
  ingest->add_option("--out", out, "Output manifest JSON")->capture_default_str();

  // split
  std::string sp_manifest, sp_abnormality, sp_out = "split.json";
  int sp_train = 282, sp_test = 50;
  uint64_t sp_seed = 0;
  bool sp_lateral = false;
  auto* split_cmd = app.add_subcommand("split", "Make a balanced train/test split");
  split_cmd->add_option("--manifest", sp_manifest)->required();
  split_cmd->add_option("--abnormality", sp_abnormality)->required();
  split_cmd->add_option("--n-train", sp_train)->capture_default_str();
  split_cmd->add_option("--n-test", sp_test)->capture_default_str();
  split_cmd->add_option("--seed", sp_seed)->capture_default_str();
  split_cmd->add_flag("--include-lateral", sp_lateral);
  split_cmd->add_option("--out", sp_out)->capture_default_str();

  // extract
  std::string ex_manifest, ex_split, ex_out = "features.csv", ex_cache;
  BackboneOpts ex_backbone;
  auto* extract = app.add_subcommand("extract", "Extract frozen-backbone features");
  extract->add_option("--manifest", ex_manifest)->required();
  extract->add_option("--split", ex_split, "Restrict to one split's images");
  ex_backbone.attach(extract);
  extract->add_option("--out", ex_out)->capture_default_str();
  extract->add_option("--cache-dir", ex_cache, "Feature cache directory");

  // train
  std::string tr_manifest, tr_split, tr_out = "head_out";
  BackboneOpts tr_backbone;
  HeadConfig tr_head;
  double tr_threshold = 0.5;
  auto* train_cmd = app.add_subcommand("train", "Train one classifier head on a split");
  train_cmd->add_option("--manifest", tr_manifest)->required();
  train_cmd->add_option("--split", tr_split)->required();
  tr_backbone.attach(train_cmd);
  train_cmd->add_option("--lr", tr_head.learning_rate)->capture_default_str();
  train_cmd->add_option("--dropout", tr_head.dropout_p)->capture_default_str();
  train_cmd->add_option("--epochs", tr_head.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tr_head.batch_size)->capture_default_str();
  train_cmd->add_option("--seed", tr_head.seed)->capture_default_str();
  train_cmd->add_option("--threshold", tr_threshold)->capture_default_str();
  train_cmd->add_option("--out", tr_out)->capture_default_str();

  // evaluate
  std::string ev_manifest, ev_abnormality, ev_out = "eval_out", ev_sizes;
  BackboneOpts ev_backbone;
  HeadConfig ev_head;
  int ev_seeds = 9, ev_train = 282, ev_test = 50;
  uint64_t ev_base = 0;
  double ev_threshold = 0.5;
  bool ev_layers = false;
  auto* evaluate =
      app.add_subcommand("evaluate", "Multi-seed experiment with aggregate metrics");
  evaluate->add_option("--manifest", ev_manifest)->required();
  evaluate->add_option("--abnormality", ev_abnormality)->required();
  ev_backbone.attach(evaluate);
  evaluate->add_option("--lr", ev_head.learning_rate)->capture_default_str();
  evaluate->add_option("--dropout", ev_head.dropout_p)->capture_default_str();
  evaluate->add_option("--epochs", ev_head.epochs)->capture_default_str();
  evaluate->add_option("--batch-size", ev_head.batch_size)->capture_default_str();
  evaluate->add_option("--seeds", ev_seeds, "Number of seeds")->capture_default_str();
  evaluate->add_option("--base-seed", ev_base)->capture_default_str();
  evaluate->add_option("--n-train", ev_train)->capture_default_str();
  evaluate->add_option("--n-test", ev_test)->capture_default_str();
  evaluate->add_option("--threshold", ev_threshold)->capture_default_str();
  evaluate->add_option("--sizes", ev_sizes, "Comma list of train sizes for the sweep");
  evaluate->add_flag("--layer-study", ev_layers, "One experiment per candidate tap layer");
  evaluate->add_option("--out", ev_out)->capture_default_str();

  // ensemble
  std::vector<std::string> en_probs;
  std::string en_out = "ensemble_out", en_subsets_csv;
  double en_threshold = 0.5;
  bool en_tune = false, en_subsets = false;
  long en_samples = 200;
  uint64_t en_sample_seed = 0;
  auto* ensemble_cmd =
      app.add_subcommand("ensemble", "Average model probabilities and study subsets");
  ensemble_cmd->add_option("--probs", en_probs, "Probability CSVs, one per model")
      ->required()
      ->expected(-1);
  ensemble_cmd->add_option("--threshold", en_threshold)->capture_default_str();
  ensemble_cmd->add_flag("--tune", en_tune, "Tune the classifier threshold for accuracy");
  ensemble_cmd->add_flag("--subsets", en_subsets, "Evaluate every non-empty subset");
  ensemble_cmd->add_option("--subsets-csv", en_subsets_csv, "Stream per-subset rows to CSV");
  ensemble_cmd->add_option("--sample-per-size", en_samples)->capture_default_str();
  ensemble_cmd->add_option("--sample-seed", en_sample_seed)->capture_default_str();
  ensemble_cmd->add_option("--out", en_out)->capture_default_str();

  // localize
  std::string lo_image, lo_head, lo_scorer, lo_roi, lo_basis = "cells", lo_out = "localize_out";
  BackboneOpts lo_backbone;
  int lo_patch = 40, lo_stride = 16;
  double lo_keep = 0.20;
  auto* localize = app.add_subcommand("localize", "Occlusion-sensitivity heat map");
  localize->add_option("--image", lo_image, "CXR image file")->required();
  localize->add_option("--head", lo_head, "Trained head JSON (in-process scoring)");
  lo_backbone.attach(localize);
  localize->add_option("--scorer-cmd", lo_scorer, "External scorer command (path -> p)");
  localize->add_option("--roi", lo_roi, "Restrict ranking to this mask");
  localize->add_option("--patch", lo_patch)->capture_default_str();
  localize->add_option("--stride", lo_stride)->capture_default_str();
  localize->add_option("--keep", lo_keep)->capture_default_str();
  localize->add_option("--basis", lo_basis, "cells or area")->capture_default_str();
  localize->add_option("--out", lo_out)->capture_default_str();

  // rulebased
  std::string rb_atlas, rb_manifest, rb_split, rb_out = "rulebased_out";
  int rb_resize = 256, rb_k = 5;
  bool rb_masks = false;
  double rb_threshold = 0.5;
  auto* rulebased =
      app.add_subcommand("rulebased", "Atlas-transfer CTR features + SVM baseline");
  rulebased->add_option("--atlas-root", rb_atlas, "JSRT root with masks/")->required();
  rulebased->add_option("--manifest", rb_manifest)->required();
  rulebased->add_option("--split", rb_split)->required();
  rulebased->add_option("--resize", rb_resize, "Working raster side (0 = native)")
      ->capture_default_str();
  rulebased->add_option("--k", rb_k, "Similar atlases per image")->capture_default_str();
  rulebased->add_flag("--save-masks", rb_masks);
  rulebased->add_option("--threshold", rb_threshold)->capture_default_str();
  rulebased->add_option("--out", rb_out)->capture_default_str();

  // tb
  std::string tb_root, tb_out = "tb_out";
  BackboneOpts tb_backbone;
  HeadConfig tb_head;
  int tb_train = 200, tb_test = 50, tb_seeds = 3, tb_members = 6;
  uint64_t tb_base = 0;
  auto* tb = app.add_subcommand("tb", "Shenzhen tuberculosis pipeline with tuned threshold");
  tb->add_option("--root", tb_root, "Shenzhen dataset root")->required();
  tb_backbone.attach(tb);
  tb->add_option("--n-train", tb_train)->capture_default_str();
  tb->add_option("--n-test", tb_test)->capture_default_str();
  tb->add_option("--seeds", tb_seeds)->capture_default_str();
  tb->add_option("--base-seed", tb_base)->capture_default_str();
  tb->add_option("--members", tb_members)->capture_default_str();
  tb->add_option("--out", tb_out)->capture_default_str();

  // report
  std::string rp_run, rp_out = "report_out";
  auto* report = app.add_subcommand("report", "Render plots from stored artifacts");
  report->add_option("--run", rp_run, "Result directory")->required();
  report->add_option("--out", rp_out)->capture_default_str();

  // all
  std::string all_config, all_out;
  auto* all = app.add_subcommand("all", "Run the full pipeline from a config file");
  all->add_option("--config", all_config, "Experiment config JSON")->required();
  all->add_option("--out", all_out, "Override output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(root, source, out);
    if (*split_cmd)
      return cmd_split(sp_manifest, sp_abnormality, sp_train, sp_test, sp_seed, sp_lateral,
                       sp_out);
    if (*extract) return cmd_extract(ex_manifest, ex_split, ex_backbone, ex_out, ex_cache);
    if (*train_cmd)
      return cmd_train(tr_manifest, tr_split, tr_backbone, tr_head, tr_out, tr_threshold);
    if (*evaluate) {
      std::vector<int> sizes;
      if (!ev_sizes.empty())
        for (const auto& tok : split(ev_sizes, ','))
          if (!trim(tok).empty()) sizes.push_back(std::stoi(trim(tok)));
      return cmd_evaluate(ev_manifest, ev_abnormality, ev_backbone, ev_head, ev_seeds, ev_base,
                          ev_train, ev_test, ev_threshold, sizes, ev_layers, ev_out);
    }
    if (*ensemble_cmd)
      return cmd_ensemble(en_probs, en_threshold, en_tune, en_subsets, en_subsets_csv,
                          en_samples, en_sample_seed, en_out);
    if (*localize)
      return cmd_localize(lo_image, lo_head, lo_backbone, lo_scorer, lo_roi, lo_patch, lo_stride,
                          lo_keep, lo_basis, lo_out);
    if (*rulebased)
      return cmd_rulebased(rb_atlas, rb_manifest, rb_split, rb_resize, rb_k, rb_masks,
                           rb_threshold, rb_out);
    if (*tb)
      return cmd_tb(tb_root, tb_backbone, tb_head, tb_train, tb_test, tb_seeds, tb_base,
                    tb_members, tb_out);
    if (*report) {
      const auto files = render_report(rp_run, rp_out);
      for (const auto& f : files) std::cout << "wrote " << f << "\n";
      return 0;
    }
    if (*all) {
      ExperimentConfig config = load_experiment_config(all_config);
      if (!all_out.empty()) config.output_dir = all_out;
      const std::string dir = run_all(config);
      std::cout << "pipeline complete -> " << dir << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace cxr
