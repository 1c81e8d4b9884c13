#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cxr/backbone.hpp"
#include "cxr/probability.hpp"
#include "cxr/rule_features.hpp"

namespace cxr {

// Binary classifier head: one affine layer with 2-way softmax, trained with
// Adam on frozen features. Dropout (inverted, seeded) applies to the input
// features. Class index 1 = abnormal.
struct HeadConfig {
  double learning_rate = 0.001;
  double dropout_p = 0.0;  // 0 = off; the dropout variant uses 0.5
  int epochs = 50;
  int batch_size = 32;
  uint64_t seed = 0;
};

struct TrainStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct TrainedHead {
  int dim = 0;
  std::vector<float> weights;  // 2 x dim, row-major
  std::array<float, 2> bias = {0.0f, 0.0f};
  HeadConfig config;
  BackboneSpec backbone;
  std::string split_ref;
  TrainStats stats;

  // softmax over the two logits; [p_normal, p_abnormal]
  std::array<double, 2> probabilities(const std::vector<float>& features) const;
};

TrainedHead train_head(const std::vector<FeatureVector>& features,
                       const std::vector<int>& labels, const HeadConfig& config,
                       const BackboneSpec& backbone = {});

std::vector<ProbabilityRecord> predict_proba(const TrainedHead& head,
                                             const std::vector<FeatureVector>& features,
                                             const std::vector<int>& labels,
                                             const std::string& model_id);

// DCN values first, then the (ctr_1d, ctr_2d, ctar) triple.
FeatureVector fuse_features(const FeatureVector& dcn, const RuleFeatures& rule,
                            const std::string& rule_image_id);

void save_head_json(const TrainedHead& head, const std::string& path);
TrainedHead load_head_json(const std::string& path);

}  // namespace cxr
