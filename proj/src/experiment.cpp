#include "cxr/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "cxr/common.hpp"
#include "cxr/external_scorer.hpp"
#include "cxr/feature_store.hpp"
#include "cxr/rule_features.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {

namespace {

json backbone_to_json(const BackboneSpec& b) {
  return {{"family", to_string(b.family)},
          {"tap_layer", b.tap_layer},
          {"input_side", b.input_side},
          {"preprocessing", to_string(b.preprocessing)}};
}

BackboneSpec backbone_from_json(const json& j) {
  BackboneSpec b;
  b.family = family_from_string(j.value("family", "standin"));
  b.tap_layer = j.value("tap_layer", "");
  b.input_side = j.value("input_side", 0);
  b.preprocessing = preprocessing_from_string(j.value("preprocessing", "scale_unit"));
  return b;
}

json config_to_json(const ExperimentConfig& c) {
  return {{"dataset",
           {{"root", c.dataset_root},
            {"source", c.source},
            {"include_lateral", c.include_lateral}}},
          {"abnormality", c.abnormality},
          {"backbone", backbone_to_json(c.backbone)},
          {"weights", c.weights},
          {"head",
           {{"learning_rate", c.head.learning_rate},
            {"dropout_p", c.head.dropout_p},
            {"epochs", c.head.epochs},
            {"batch_size", c.head.batch_size}}},
          {"split",
           {{"n_train", c.n_train},
            {"n_test", c.n_test},
            {"n_seeds", c.n_seeds},
            {"base_seed", c.base_seed}}},
          {"threshold", c.threshold},
          {"ensemble",
           {{"enabled", c.ensemble_enabled},
            {"members", c.ensemble_members},
            {"tune_threshold", c.tune_threshold_enabled},
            {"subset_study", c.subset_study}}},
          {"localization",
           {{"enabled", c.localization_enabled},
            {"patch_side", c.occl_patch_side},
            {"stride", c.occl_stride},
            {"keep_fraction", c.occl_keep_fraction},
            {"histogram_images", c.histogram_images},
            {"image_ids", c.localize_ids},
            {"scorer_command", c.scorer_command}}},
          {"sweep_sizes", c.sweep_sizes},
          {"layer_study", c.layer_study},
          {"output_dir", c.output_dir}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    c.dataset_root = d.value("root", c.dataset_root);
    c.source = d.value("source", c.source);
    c.include_lateral = d.value("include_lateral", c.include_lateral);
  }
  c.abnormality = j.value("abnormality", c.abnormality);
  if (j.contains("backbone")) c.backbone = backbone_from_json(j["backbone"]);
  c.weights = j.value("weights", c.weights);
  if (j.contains("head")) {
    const auto& h = j["head"];
    c.head.learning_rate = h.value("learning_rate", c.head.learning_rate);
    c.head.dropout_p = h.value("dropout_p", c.head.dropout_p);
    c.head.epochs = h.value("epochs", c.head.epochs);
    c.head.batch_size = h.value("batch_size", c.head.batch_size);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    c.n_train = s.value("n_train", c.n_train);
    c.n_test = s.value("n_test", c.n_test);
    c.n_seeds = s.value("n_seeds", c.n_seeds);
    c.base_seed = s.value("base_seed", c.base_seed);
  }
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("ensemble")) {
    const auto& e = j["ensemble"];
    c.ensemble_enabled = e.value("enabled", c.ensemble_enabled);
    c.ensemble_members = e.value("members", c.ensemble_members);
    c.tune_threshold_enabled = e.value("tune_threshold", c.tune_threshold_enabled);
    c.subset_study = e.value("subset_study", c.subset_study);
  }
  if (j.contains("localization")) {
    const auto& l = j["localization"];
    c.localization_enabled = l.value("enabled", c.localization_enabled);
    c.occl_patch_side = l.value("patch_side", c.occl_patch_side);
    c.occl_stride = l.value("stride", c.occl_stride);
    c.occl_keep_fraction = l.value("keep_fraction", c.occl_keep_fraction);
    c.histogram_images = l.value("histogram_images", c.histogram_images);
    c.localize_ids = l.value("image_ids", c.localize_ids);
    c.scorer_command = l.value("scorer_command", c.scorer_command);
  }
  c.sweep_sizes = j.value("sweep_sizes", c.sweep_sizes);
  c.layer_study = j.value("layer_study", c.layer_study);
  c.output_dir = j.value("output_dir", c.output_dir);
  return c;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("malformed config JSON " + path + ": " + e.what());
  }
  return config_from_json(doc);
}

void save_experiment_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path);
  out << config_to_json(config).dump(2) << "\n";
}

namespace {

// Features for the union of split ids, extracted once and selected per seed.
class FeatureIndex {
 public:
  FeatureIndex(const DatasetManifest& manifest, const std::vector<std::string>& ids,
               const BackboneSpec& spec, const std::string& weights,
               const std::map<std::string, RuleFeatures>* fuse) {
    std::vector<ImageRecord> records;
    for (const auto& id : ids) {
      const ImageRecord* r = manifest.find(id);
      if (!r) throw ValidationError("split id not present in manifest: " + id);
      records.push_back(*r);
    }
    auto features = extract_features(records, spec, weights);
    for (auto& fv : features) {
      if (fuse) {
        auto it = fuse->find(fv.image_id);
        if (it == fuse->end())
          throw ValidationError("no rule features for image " + fv.image_id);
        fv = fuse_features(fv, it->second, fv.image_id);
      }
      by_id_.emplace(fv.image_id, std::move(fv));
    }
  }

  std::vector<FeatureVector> select(const std::vector<std::string>& ids) const {
    std::vector<FeatureVector> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(by_id_.at(id));
    return out;
  }

 private:
  std::unordered_map<std::string, FeatureVector> by_id_;
};

std::vector<int> labels_for(const DatasetManifest& manifest, const std::vector<std::string>& ids,
                            const std::string& abnormality) {
  std::vector<int> labels;
  labels.reserve(ids.size());
  for (const auto& id : ids) labels.push_back(manifest.find(id)->has_label(abnormality) ? 1 : 0);
  return labels;
}

}  // namespace

MultiSeedResult run_multi_seed(const DatasetManifest& manifest, const std::string& abnormality,
                               const BackboneSpec& backbone, const std::string& weights,
                               const HeadConfig& head_config, int n_seeds, uint64_t base_seed,
                               int n_train, int n_test, double threshold, bool include_lateral,
                               const std::map<std::string, RuleFeatures>* fuse) {
  if (n_seeds < 1) throw ValidationError("run_multi_seed: n_seeds must be >= 1");
  const BackboneSpec spec = backbone.resolved();

  std::vector<SplitSpec> splits;
  std::set<std::string> id_union;
  for (int i = 0; i < n_seeds; ++i) {
    splits.push_back(make_balanced_split(manifest, abnormality, n_train, n_test,
                                         base_seed + static_cast<uint64_t>(i), include_lateral));
    for (const auto& id : splits.back().all_ids()) id_union.insert(id);
  }
  const FeatureIndex index(manifest,
                           std::vector<std::string>(id_union.begin(), id_union.end()), spec,
                           weights, fuse);

  MultiSeedResult result;
  result.runs.resize(n_seeds);
  for (int i = 0; i < n_seeds; ++i) {
    SeedRun& run = result.runs[i];
    run.seed = base_seed + static_cast<uint64_t>(i);
    run.split = splits[i];

    const auto train_ids = run.split.train_ids();
    const auto test_ids = run.split.test_ids();
    HeadConfig cfg = head_config;
    cfg.seed = run.seed;
    run.head = train_head(index.select(train_ids), labels_for(manifest, train_ids, abnormality),
                          cfg, spec);
    run.head.split_ref = abnormality + ":seed" + std::to_string(run.seed);
    run.test_records =
        predict_proba(run.head, index.select(test_ids),
                      labels_for(manifest, test_ids, abnormality),
                      "seed" + std::to_string(run.seed));
    run.report = evaluate_records(run.test_records, threshold);
    run.report.meta["seed"] = std::to_string(run.seed);
    run.report.meta["abnormality"] = abnormality;
    run.report.meta["backbone"] = to_string(spec.family) + "/" + spec.tap_layer;
    run.report.meta["n_train_per_class"] = std::to_string(n_train);
    run.report.meta["n_test_per_class"] = std::to_string(n_test);
    run.report.meta["epochs"] = std::to_string(cfg.epochs);
    run.report.meta["batch_size"] = std::to_string(cfg.batch_size);
    run.report.meta["learning_rate"] = std::to_string(cfg.learning_rate);
    run.report.meta["dropout_p"] = std::to_string(cfg.dropout_p);
  }

  std::vector<MetricsReport> reports;
  for (const auto& run : result.runs) reports.push_back(run.report);
  result.aggregate = summarize_runs(reports);
  return result;
}

std::vector<LayerStudyRow> run_layer_study(const DatasetManifest& manifest,
                                           const std::string& abnormality, Family family,
                                           const std::string& weights,
                                           const HeadConfig& head_config, int n_seeds,
                                           uint64_t base_seed, int n_train, int n_test,
                                           double threshold, int input_side) {
  std::vector<LayerStudyRow> rows;
  for (const auto& layer : list_candidate_layers(family)) {
    BackboneSpec spec;
    spec.family = family;
    spec.tap_layer = layer.name;
    spec.input_side = input_side;
    const MultiSeedResult r = run_multi_seed(manifest, abnormality, spec, weights, head_config,
                                             n_seeds, base_seed, n_train, n_test, threshold);
    rows.push_back({layer, r.aggregate});
  }
  return rows;
}

std::vector<SizeSweepRow> run_size_sweep(const DatasetManifest& manifest,
                                         const std::string& abnormality,
                                         const BackboneSpec& backbone,
                                         const std::string& weights,
                                         const HeadConfig& head_config,
                                         const std::vector<int>& sizes, int n_test, int n_seeds,
                                         uint64_t base_seed, double threshold) {
  std::vector<SizeSweepRow> rows;
  for (int size : sizes) {
    const MultiSeedResult r = run_multi_seed(manifest, abnormality, backbone, weights,
                                             head_config, n_seeds, base_seed, size, n_test,
                                             threshold);
    rows.push_back({size, r.aggregate});
  }
  return rows;
}

namespace {

json summary_to_json(const RunSummary& s) {
  auto stat = [](const SummaryStat& v) { return json{{"mean", v.mean}, {"sd", v.sd}}; };
  return {{"n", s.n},
          {"accuracy", stat(s.accuracy)},
          {"auc", stat(s.auc)},
          {"sensitivity", stat(s.sensitivity)},
          {"specificity", stat(s.specificity)}};
}

}  // namespace

void save_layer_study_json(const std::vector<LayerStudyRow>& rows, const std::string& path) {
  json arr = json::array();
  for (const auto& row : rows)
    arr.push_back({{"layer", row.layer.name},
                   {"stage", row.layer.stage},
                   {"operation", row.layer.operation},
                   {"summary", summary_to_json(row.summary)}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write layer study: " + path);
  out << arr.dump(2) << "\n";
}

void save_size_sweep_json(const std::vector<SizeSweepRow>& rows, const std::string& path) {
  json arr = json::array();
  for (const auto& row : rows)
    arr.push_back({{"train_size", row.train_size}, {"summary", summary_to_json(row.summary)}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write size sweep: " + path);
  out << arr.dump(2) << "\n";
}

namespace {

struct StageError : Error {
  StageError(const std::string& stage, const Error& cause)
      : Error(cause.kind(), "stage " + stage + ": " + cause.what()) {}
  StageError(const std::string& stage, ErrorKind kind, const std::string& what)
      : Error(kind, "stage " + stage + ": " + what) {}
};

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw StageError(name, e);
  } catch (const std::exception& e) {
    throw StageError(name, ErrorKind::validation, e.what());
  }
}

}  // namespace

std::string run_all(const ExperimentConfig& config) {
  const fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);
  save_experiment_config(config, (out_dir / "config.resolved.json").string());

  // ingest
  DatasetManifest manifest = stage("ingest", [&config] {
    return load_manifest(config.dataset_root, source_from_string(config.source));
  });
  save_manifest_json(manifest, (out_dir / "manifest.json").string());

  // extract + train + evaluate, one head per seed
  const BackboneSpec spec = config.backbone.resolved();
  MultiSeedResult multi = stage("train", [&] {
    return run_multi_seed(manifest, config.abnormality, spec, config.weights, config.head,
                          config.n_seeds, config.base_seed, config.n_train, config.n_test,
                          config.threshold, config.include_lateral);
  });

  const fs::path seeds_dir = out_dir / "seeds";
  for (const auto& run : multi.runs) {
    const fs::path dir = seeds_dir / ("seed_" + std::to_string(run.seed));
    fs::create_directories(dir);
    save_split_json(run.split, (dir / "split.json").string());
    save_head_json(run.head, (dir / "head.json").string());
    save_probability_csv(run.test_records, (dir / "test_probs.csv").string());
    save_metrics_json(run.report, (dir / "metrics.json").string());
    save_roc_csv(roc_auc(run.test_records).first, (dir / "roc.csv").string());
  }
  save_summary_json(multi.aggregate, (out_dir / "summary.json").string());

  // ensemble: members share the base seed's split, differ in head seed
  if (config.ensemble_enabled) {
    stage("ensemble", [&]() -> int {
      const fs::path dir = out_dir / "ensemble";
      fs::create_directories(dir);
      const SplitSpec split = make_balanced_split(manifest, config.abnormality, config.n_train,
                                                  config.n_test, config.base_seed,
                                                  config.include_lateral);
      const FeatureIndex index(manifest, split.all_ids(), spec, config.weights, nullptr);
      const auto train_ids = split.train_ids();
      const auto test_ids = split.test_ids();
      const auto train_labels = labels_for(manifest, train_ids, config.abnormality);
      const auto test_labels = labels_for(manifest, test_ids, config.abnormality);
      const auto train_features = index.select(train_ids);
      const auto test_features = index.select(test_ids);

      std::vector<std::vector<ProbabilityRecord>> member_records;
      for (int m = 0; m < config.ensemble_members; ++m) {
        HeadConfig cfg = config.head;
        cfg.seed = config.base_seed + 1000 + static_cast<uint64_t>(m);
        TrainedHead head = train_head(train_features, train_labels, cfg, spec);
        char name[16];
        std::snprintf(name, sizeof(name), "m%02d", m);
        member_records.push_back(predict_proba(head, test_features, test_labels, name));
        save_head_json(head, (dir / (std::string(name) + "_head.json")).string());
        save_probability_csv(member_records.back(),
                             (dir / (std::string(name) + "_probs.csv")).string());
      }
      const EnsemblePool pool = make_pool(member_records);
      const auto averaged = average_probabilities(pool, pool.model_ids);
      save_probability_csv(averaged, (dir / "ensemble_probs.csv").string());

      MetricsReport report = evaluate_records(averaged, config.threshold);
      report.meta["members"] = std::to_string(config.ensemble_members);
      if (config.tune_threshold_enabled) {
        const auto [best_t, best_acc] = tune_threshold(averaged);
        report.meta["tuned_threshold"] = std::to_string(best_t);
        MetricsReport tuned = evaluate_records(averaged, best_t);
        tuned.meta["members"] = std::to_string(config.ensemble_members);
        tuned.meta["tuned"] = "true";
        save_metrics_json(tuned, (dir / "metrics_tuned.json").string());
      }
      save_metrics_json(report, (dir / "metrics.json").string());
      save_roc_csv(roc_auc(averaged).first, (dir / "roc.csv").string());

      if (config.subset_study) {
        const auto stats = scan_subset_stats(pool, config.threshold, SubsetMetric::accuracy);
        save_size_stats_json(stats, (dir / "subset_stats.json").string());
      }
      return 0;
    });
  }

  // localization
  if (config.localization_enabled) {
    stage("localize", [&]() -> int {
      const fs::path dir = out_dir / "localization";
      fs::create_directories(dir);
      const SplitSpec split = make_balanced_split(manifest, config.abnormality, config.n_train,
                                                  config.n_test, config.base_seed,
                                                  config.include_lateral);

      // Scorer: in-process stand-in head, or a child process speaking the
      // path->probability protocol. The external route is serialized through
      // one probe file, so it uses the serial map.
      Scorer scorer;
      std::unique_ptr<ExternalScorer> external;
      std::unique_ptr<TrainedHead> head;
      std::unique_ptr<StandInBackbone> net;
      bool parallel_map = true;
      if (!config.scorer_command.empty()) {
        external = std::make_unique<ExternalScorer>(config.scorer_command);
        const std::string probe = (dir / "scorer_probe.pgm").string();
        scorer = [&external, probe](const Image& img) {
          save_pgm(img, probe);
          return external->score_file(probe);
        };
        parallel_map = false;
      } else {
        if (spec.family != Family::standin)
          throw ValidationError(
              "in-process localization needs the standin family; set "
              "localization.scorer_command for other backbones");
        const FeatureIndex index(manifest, split.all_ids(), spec, config.weights, nullptr);
        const auto train_ids = split.train_ids();
        HeadConfig cfg = config.head;
        cfg.seed = config.base_seed;
        head = std::make_unique<TrainedHead>(
            train_head(index.select(train_ids),
                       labels_for(manifest, train_ids, config.abnormality), cfg, spec));
        net = std::make_unique<StandInBackbone>(
            WeightsSource::parse(config.weights, spec.family).seed);
        scorer = [&net, &head, spec](const Image& img) {
          return head->probabilities(net->extract(img, spec).values)[1];
        };
      }
      auto map_fn = [parallel_map](const Image& img, const std::string& id, const Scorer& s,
                                   const OcclusionConfig& c) {
        return parallel_map ? occlusion_map(img, id, s, c)
                            : occlusion_map_serial(img, id, s, c);
      };

      OcclusionConfig occl;
      occl.patch_side = config.occl_patch_side;
      occl.stride = config.occl_stride;
      occl.keep_fraction = config.occl_keep_fraction;

      std::vector<std::string> targets = config.localize_ids;
      if (targets.empty() && !split.test_pos.empty()) targets.push_back(split.test_pos.front());
      for (const auto& id : targets) {
        const ImageRecord* rec = manifest.find(id);
        if (!rec) throw ValidationError("localize target not in manifest: " + id);
        const Image img = load_image(rec->path);
        const HeatMap map = map_fn(img, id, scorer, occl);
        const fs::path img_dir = dir / id;
        fs::create_directories(img_dir);
        save_heatmap(map, (img_dir / "heatmap.csv").string(),
                     (img_dir / "heatmap.json").string());

        // ROI from the record's lung masks when present.
        OcclusionConfig with_roi = occl;
        if (!rec->masks.lung_left.empty() && !rec->masks.lung_right.empty()) {
          Mask lungs = mask_union(load_mask(rec->masks.lung_left),
                                  load_mask(rec->masks.lung_right));
          if (lungs.width == img.width && lungs.height == img.height)
            with_roi.roi = std::move(lungs);
        }
        const Mask grid = binarize_lowest_fraction(map, with_roi.keep_fraction,
                                                   with_roi.basis, with_roi.roi);
        save_mask(grid, (img_dir / "grid_mask.pgm").string());
        render_overlay(img, map, grid, (img_dir / "overlay.png").string());
        save_histogram_json(heatmap_histogram(map), (img_dir / "histogram.json").string());
      }

      if (config.histogram_images > 0) {
        auto corpus_histogram = [&](const std::vector<std::string>& ids, const fs::path& path) {
          std::vector<Histogram> histograms;
          for (int i = 0; i < std::min<int>(config.histogram_images,
                                            static_cast<int>(ids.size()));
               ++i) {
            const Image img = load_image(manifest.find(ids[i])->path);
            histograms.push_back(heatmap_histogram(map_fn(img, ids[i], scorer, occl)));
          }
          if (!histograms.empty())
            save_histogram_json(average_histograms(histograms), path.string());
        };
        corpus_histogram(split.test_pos, dir / "histogram_abnormal.json");
        corpus_histogram(split.test_neg, dir / "histogram_normal.json");
      }
      const fs::path probe = dir / "scorer_probe.pgm";
      if (fs::exists(probe)) fs::remove(probe);
      return 0;
    });
  }

  // training-size sweep
  if (!config.sweep_sizes.empty()) {
    stage("sweep", [&]() -> int {
      const auto rows = run_size_sweep(manifest, config.abnormality, spec, config.weights,
                                       config.head, config.sweep_sizes, config.n_test,
                                       config.n_seeds, config.base_seed, config.threshold);
      save_size_sweep_json(rows, (out_dir / "size_sweep.json").string());
      return 0;
    });
  }

  // per-layer study
  if (config.layer_study) {
    stage("layer-study", [&]() -> int {
      const auto rows = run_layer_study(manifest, config.abnormality, spec.family,
                                        config.weights, config.head, config.n_seeds,
                                        config.base_seed, config.n_train, config.n_test,
                                        config.threshold, spec.input_side);
      save_layer_study_json(rows, (out_dir / "layer_study.json").string());
      return 0;
    });
  }

  // run manifest: config hash + hash of every artifact written
  json artifacts = json::object();
  const uint64_t config_hash = fnv1a64(config_to_json(config).dump());
  for (auto it = fs::recursive_directory_iterator(out_dir);
       it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file()) continue;
    if (it->path().filename() == "run_manifest.json") continue;
    const std::string rel = fs::relative(it->path(), out_dir).string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash_file(it->path().string())));
    artifacts[rel] = buf;
  }
  char cfg_buf[32];
  std::snprintf(cfg_buf, sizeof(cfg_buf), "%016llx",
                static_cast<unsigned long long>(config_hash));
  json run_manifest = {
      {"format", "cxr-run v1"}, {"config_hash", cfg_buf}, {"artifacts", artifacts}};
  std::ofstream rm(out_dir / "run_manifest.json");
  rm << run_manifest.dump(2) << "\n";

  return out_dir.string();
}

}  // namespace cxr
