#pragma once

#include <string>
#include <vector>

namespace cxr {

// One model's abnormal-class probability for one test image.
// Class convention everywhere: label 1 = abnormal.
struct ProbabilityRecord {
  std::string image_id;
  std::string model_id;
  double p_abnormal = 0.0;
  int true_label = 0;
};

void save_probability_csv(const std::vector<ProbabilityRecord>& records, const std::string& path);
std::vector<ProbabilityRecord> load_probability_csv(const std::string& path);

}  // namespace cxr
