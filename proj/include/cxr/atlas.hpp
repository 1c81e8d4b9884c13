#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cxr/image.hpp"
#include "cxr/radon.hpp"
#include "cxr/rule_features.hpp"

namespace cxr {

// One JSRT-style reference case: image plus gold-standard boundary masks.
struct AtlasEntry {
  std::string id;
  Image image;
  Mask lung_left;
  Mask lung_right;
  Mask heart;
};

// Ascending mean Bhattacharyya distance, ties broken by atlas id.
std::vector<std::string> rank_similar_atlases(const RadonSignature& probe,
                                              const std::vector<RadonSignature>& atlas_signatures,
                                              int k = 5);

// Forward displacement field: atlas pixel (x,y) maps to test-image coordinate
// (x + dx, y + dy).
struct DisplacementField {
  int width = 0, height = 0;
  std::vector<float> dx, dy;

  DisplacementField() = default;
  DisplacementField(int w, int h)
      : width(w), height(h), dx(static_cast<size_t>(w) * h, 0.0f),
        dy(static_cast<size_t>(w) * h, 0.0f) {}
  size_t idx(int y, int x) const { return static_cast<size_t>(y) * width + x; }
};

// Pluggable dense correspondence from atlas coordinates to test coordinates.
using CorrespondenceFn =
    std::function<DisplacementField(const Image& atlas_image, const Image& test_image)>;

// Shipped baseline: coarse block matching of gradient-magnitude descriptors
// on a control grid, bilinearly interpolated to a dense field. A stand-in for
// the dense-correspondence method proper, not a reimplementation of it.
DisplacementField block_matching_correspondence(const Image& atlas_image,
                                                const Image& test_image);
DisplacementField block_matching_correspondence_serial(const Image& atlas_image,
                                                       const Image& test_image);
CorrespondenceFn default_correspondence();
CorrespondenceFn identity_correspondence();

// Forward-splat warp with one 4-neighbor majority hole-fill pass.
Mask warp_mask(const Mask& mask, const DisplacementField& field, int out_width, int out_height);

// Warps each ranked atlas's masks through its correspondence and majority
// votes per pixel. Atlases whose correspondence throws are dropped with a
// warning on stderr; all dropped is a segmentation error.
Segmentation transfer_segmentation(const Image& test_image, const std::string& test_id,
                                   const std::vector<AtlasEntry>& ranked_atlases,
                                   const CorrespondenceFn& correspondence);
Segmentation transfer_segmentation_serial(const Image& test_image, const std::string& test_id,
                                          const std::vector<AtlasEntry>& ranked_atlases,
                                          const CorrespondenceFn& correspondence);

// Loads JSRT images + SCR-layout masks (masks/{left_lung,right_lung,heart}).
std::vector<AtlasEntry> load_atlas(const std::string& jsrt_root, int resize_to = 0);

}  // namespace cxr
