#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cxr/probability.hpp"
#include "cxr/rule_features.hpp"

namespace cxr {

struct SvmConfig {
  double lambda = 0.01;  // L2 strength
  int iterations = 2000;
  uint64_t seed = 0;  // kept for API symmetry; training is full-batch deterministic
};

// Linear max-margin classifier over the standardized (ctr_1d, ctr_2d, ctar)
// triple, with a logistic link fitted on training scores so it emits
// probabilities compatible with the metrics/ensemble modules.
struct RuleClassifier {
  std::array<double, 3> w = {0, 0, 0};
  double b = 0.0;
  std::array<double, 3> feat_mean = {0, 0, 0};
  std::array<double, 3> feat_scale = {1, 1, 1};
  double platt_a = -1.0;
  double platt_b = 0.0;
  SvmConfig config;

  double decision(const RuleFeatures& f) const;     // >0 leans abnormal
  double probability(const RuleFeatures& f) const;  // p_abnormal in [0,1]
};

RuleClassifier train_rule_classifier(const std::vector<RuleFeatures>& features,
                                     const std::vector<int>& labels, const SvmConfig& config = {});

std::vector<ProbabilityRecord> predict_rule(const RuleClassifier& clf,
                                            const std::vector<std::string>& image_ids,
                                            const std::vector<RuleFeatures>& features,
                                            const std::vector<int>& labels,
                                            const std::string& model_id);

void save_rule_classifier_json(const RuleClassifier& clf, const std::string& path);
RuleClassifier load_rule_classifier_json(const std::string& path);

}  // namespace cxr
