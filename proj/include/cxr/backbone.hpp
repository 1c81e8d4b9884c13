#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/image.hpp"
#include "cxr/manifest.hpp"

namespace cxr {

enum class Family { alexnet, vgg16, vgg19, resnet50, resnet101, resnet152, standin };
enum class Preprocessing { mean_subtract, scale_unit };

std::string to_string(Family f);
std::string to_string(Preprocessing p);
Family family_from_string(const std::string& s);
Preprocessing preprocessing_from_string(const std::string& s);

struct LayerInfo {
  std::string name;
  std::string stage;
  std::string operation;
};

// Candidate tap layers per family, with the published layer names.
const std::vector<LayerInfo>& list_candidate_layers(Family family);
std::string default_tap_layer(Family family);
int default_input_side(Family family);

struct BackboneSpec {
  Family family = Family::standin;
  std::string tap_layer;  // empty -> family default
  int input_side = 0;     // 0 -> family default
  Preprocessing preprocessing = Preprocessing::scale_unit;

  BackboneSpec resolved() const;
  std::string cache_key() const;
};

struct FeatureVector {
  std::string image_id;
  std::vector<float> values;

  int dim() const { return static_cast<int>(values.size()); }
};

// Resize to input_side^2, replicate grayscale to 3 channels, then normalize:
// scale_unit divides by the source intensity scale, mean_subtract removes the
// per-image mean in raw units.
Tensor3 preprocess_image(const Image& img, const BackboneSpec& spec);
Tensor3 preprocess_record(const ImageRecord& record, const BackboneSpec& spec);

// Small frozen convolutional stack with fixed-seed random weights. Ships with
// the repo so every experiment runs without downloaded checkpoints; exposes
// named tap layers like the published families do.
class StandInBackbone {
 public:
  explicit StandInBackbone(uint64_t seed = 42);

  FeatureVector extract(const Image& img, const BackboneSpec& spec,
                        const std::string& image_id = "") const;
  std::vector<float> forward_tap(const Tensor3& input, const std::string& tap_layer) const;
  uint64_t weights_checksum() const;
  uint64_t seed() const { return seed_; }

 private:
  struct Conv {
    int in_ch = 0, out_ch = 0;
    std::vector<float> w;  // [out][in][3][3]
    std::vector<float> b;
  };
  Conv conv1_, conv2_, conv3_;
  uint64_t seed_;
};

// Locator for frozen weights. The stand-in family resolves "standin:<seed>".
// Published families have no in-repo inference engine; they resolve either
// "store:<features.csv>" (precomputed feature store) or "exec:<command>"
// (child process speaking the feature-extraction line protocol).
struct WeightsSource {
  enum class Kind { standin, store, exec };
  Kind kind = Kind::standin;
  uint64_t seed = 42;
  std::string argument;

  static WeightsSource parse(const std::string& locator, Family family);
};

std::vector<FeatureVector> extract_features(const std::vector<ImageRecord>& records,
                                            const BackboneSpec& spec,
                                            const std::string& weights_source);
std::vector<FeatureVector> extract_features_serial(const std::vector<ImageRecord>& records,
                                                   const BackboneSpec& spec,
                                                   const std::string& weights_source);

// Disk-cached variant keyed by (family, tap, weights checksum); occlusion
// probing never goes through this (occluded variants are novel images).
std::vector<FeatureVector> extract_features_cached(const std::vector<ImageRecord>& records,
                                                   const BackboneSpec& spec,
                                                   const std::string& weights_source,
                                                   const std::string& cache_dir);

}  // namespace cxr
