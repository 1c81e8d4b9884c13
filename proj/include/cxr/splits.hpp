#pragma once

#include <string>
#include <vector>

#include "cxr/manifest.hpp"

namespace cxr {

// Balanced binary split. Test ids are drawn from the front of the shuffled
// pools, so for a fixed seed the test set is identical across training sizes
// and size-sweep curves stay comparable.
struct SplitSpec {
  std::string abnormality;
  uint64_t seed = 0;
  std::vector<std::string> train_pos;
  std::vector<std::string> train_neg;
  std::vector<std::string> test_pos;
  std::vector<std::string> test_neg;

  std::vector<std::string> train_ids() const;
  std::vector<std::string> test_ids() const;
  std::vector<std::string> all_ids() const;
};

SplitSpec make_balanced_split(const DatasetManifest& manifest, const std::string& abnormality,
                              int n_train, int n_test, uint64_t seed,
                              bool include_lateral = false);

std::vector<SplitSpec> make_size_sweep(const DatasetManifest& manifest,
                                       const std::string& abnormality,
                                       const std::vector<int>& sizes, int n_test,
                                       const std::vector<uint64_t>& seeds,
                                       bool include_lateral = false);

void validate_split(const SplitSpec& split, const DatasetManifest* manifest = nullptr);

void save_split_json(const SplitSpec& split, const std::string& path);
SplitSpec load_split_json(const std::string& path);

}  // namespace cxr
