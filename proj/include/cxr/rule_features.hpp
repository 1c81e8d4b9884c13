#pragma once

#include <string>
#include <vector>

#include "cxr/image.hpp"

namespace cxr {

// Transferred lung/heart masks for one image.
struct Segmentation {
  std::string image_id;
  Mask lung_left;
  Mask lung_right;
  Mask heart;
  std::vector<std::string> provenance;  // atlas ids that voted
};

// (1D-CTR, 2D-CTR, CTAR) — heart/thorax width ratio, perimeter ratio and
// heart-to-lung area ratio.
struct RuleFeatures {
  double ctr_1d = 0.0;
  double ctr_2d = 0.0;
  double ctar = 0.0;
};

// ctr_1d: widest heart row extent over widest outer lung-margin row extent.
// ctr_2d: heart perimeter over the perimeter of the thoracic region, taken as
//         the union of the two lungs' filled convex hulls.
// ctar:   heart area over (left+right) lung area.
// Areas are pixel counts, perimeters boundary-pixel counts at 4-connectivity.
RuleFeatures compute_rule_features(const Segmentation& seg);

long mask_area(const Mask& mask);
long perimeter_4conn(const Mask& mask);
Mask convex_hull_mask(const Mask& mask);
Mask mask_union(const Mask& a, const Mask& b);

void save_rule_features_json(const RuleFeatures& f, const std::string& path);
RuleFeatures load_rule_features_json(const std::string& path);

}  // namespace cxr
