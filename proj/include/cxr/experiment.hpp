#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cxr/backbone.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/heads.hpp"
#include "cxr/manifest.hpp"
#include "cxr/metrics.hpp"
#include "cxr/occlusion.hpp"
#include "cxr/splits.hpp"

namespace cxr {

// Fully resolved experiment configuration; every field has a recorded default
// and the resolved copy is persisted next to the results.
struct ExperimentConfig {
  std::string dataset_root = ".";
  std::string source = "synthetic";
  bool include_lateral = false;
  std::string abnormality = "cardiomegaly";

  BackboneSpec backbone;                  // family standin by default
  std::string weights = "standin:42";

  HeadConfig head;                        // lr 0.001, epochs 50, batch 32

  int n_train = 282;
  int n_test = 50;
  int n_seeds = 9;
  uint64_t base_seed = 0;
  double threshold = 0.5;

  bool ensemble_enabled = true;
  int ensemble_members = 6;
  bool tune_threshold_enabled = false;
  bool subset_study = false;              // exhaustive subset scan + per-size stats

  bool localization_enabled = false;
  int occl_patch_side = 40;
  int occl_stride = 16;
  double occl_keep_fraction = 0.20;
  int histogram_images = 0;               // per class, 0 = skip corpus histograms
  std::vector<std::string> localize_ids;  // explicit images to map
  std::string scorer_command;             // external scorer; empty = in-process head

  std::vector<int> sweep_sizes;           // non-empty enables the size sweep
  bool layer_study = false;

  std::string output_dir = "runs/out";
};

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& config, const std::string& path);

struct SeedRun {
  uint64_t seed = 0;
  SplitSpec split;
  TrainedHead head;
  std::vector<ProbabilityRecord> test_records;
  MetricsReport report;
};

struct MultiSeedResult {
  std::vector<SeedRun> runs;
  RunSummary aggregate;
};

// One balanced split + trained head + evaluation per seed; the aggregate is
// summarize_runs over the per-seed reports. Rule features, when given, are
// fused onto every feature vector before training.
MultiSeedResult run_multi_seed(const DatasetManifest& manifest, const std::string& abnormality,
                               const BackboneSpec& backbone, const std::string& weights,
                               const HeadConfig& head_config, int n_seeds, uint64_t base_seed,
                               int n_train, int n_test, double threshold,
                               bool include_lateral = false,
                               const std::map<std::string, RuleFeatures>* fuse = nullptr);

struct LayerStudyRow {
  LayerInfo layer;
  RunSummary summary;
};

std::vector<LayerStudyRow> run_layer_study(const DatasetManifest& manifest,
                                           const std::string& abnormality, Family family,
                                           const std::string& weights,
                                           const HeadConfig& head_config, int n_seeds,
                                           uint64_t base_seed, int n_train, int n_test,
                                           double threshold, int input_side = 0);

struct SizeSweepRow {
  int train_size = 0;
  RunSummary summary;
};

std::vector<SizeSweepRow> run_size_sweep(const DatasetManifest& manifest,
                                         const std::string& abnormality,
                                         const BackboneSpec& backbone,
                                         const std::string& weights,
                                         const HeadConfig& head_config,
                                         const std::vector<int>& sizes, int n_test, int n_seeds,
                                         uint64_t base_seed, double threshold);

void save_layer_study_json(const std::vector<LayerStudyRow>& rows, const std::string& path);
void save_size_sweep_json(const std::vector<SizeSweepRow>& rows, const std::string& path);

// Executes ingest -> extract -> multi-seed train -> metrics -> optional
// ensemble/localization/sweep stages, writing every artifact plus a manifest
// of file hashes. Deterministic: identical config + inputs give byte-identical
// metric JSONs. Returns the output directory.
std::string run_all(const ExperimentConfig& config);

}  // namespace cxr
