#pragma once

#include <string>
#include <vector>

#include "cxr/backbone.hpp"

namespace cxr {

// Versioned CSV feature store, one file per (split, backbone):
//   # cxr-features v1 family=<f> tap=<layer> input_side=<n> preprocessing=<p>
//   image_id,dim,values...
//   <id>,<dim>,v0,v1,...
struct FeatureStoreHeader {
  std::string family;
  std::string tap_layer;
  int input_side = 0;
  std::string preprocessing;
};

void save_feature_store(const std::string& path, const BackboneSpec& spec,
                        const std::vector<FeatureVector>& features);
std::vector<FeatureVector> load_feature_store(const std::string& path,
                                              FeatureStoreHeader* header = nullptr);

}  // namespace cxr
