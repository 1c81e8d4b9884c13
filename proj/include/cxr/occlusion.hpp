#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cxr/image.hpp"

namespace cxr {

// Scores one image as p_abnormal in [0,1]. Must be pure for the parallel map
// to be deterministic.
using Scorer = std::function<double(const Image&)>;

enum class FractionBasis { cells, area };

struct OcclusionConfig {
  int patch_side = 40;
  int stride = 16;
  float fill = 0.0f;  // black in raw pixel units, applied before preprocessing
  std::optional<Mask> roi;
  double keep_fraction = 0.20;
  FractionBasis basis = FractionBasis::cells;
};

// Per-patch-position probability grid. Patch corners sit at stride multiples
// plus a clamped final position, so the probed patches cover every pixel
// whenever stride <= patch_side.
struct HeatMap {
  std::string image_id;
  int rows = 0, cols = 0;
  std::vector<int> ys, xs;  // patch top-left corners per grid row/col
  std::vector<double> p;    // rows x cols, row-major
  double baseline_p = 0.0;  // unoccluded score
  int image_width = 0, image_height = 0;
  int patch_side = 0, stride = 0;

  double at(int r, int c) const { return p[static_cast<size_t>(r) * cols + c]; }
  int cells() const { return rows * cols; }
};

HeatMap occlusion_map(const Image& img, const std::string& image_id, const Scorer& scorer,
                      const OcclusionConfig& config);
HeatMap occlusion_map_serial(const Image& img, const std::string& image_id, const Scorer& scorer,
                             const OcclusionConfig& config);

// Marks the floor(keep_fraction * candidates) lowest-probability cells, ties
// broken by row-major order. With an ROI, only cells whose patch center lies
// in the ROI are ranked. Area basis instead marks lowest cells until their
// union footprint reaches keep_fraction of the image area.
Mask binarize_lowest_fraction(const HeatMap& map, double keep_fraction,
                              FractionBasis basis = FractionBasis::cells,
                              const std::optional<Mask>& roi = std::nullopt);

struct Histogram {
  int bins = 20;
  std::vector<long> counts;
  std::vector<double> freq;  // normalized
};

// Fixed 20-bin histogram of [0,1].
Histogram heatmap_histogram(const HeatMap& map);
Histogram average_histograms(const std::vector<Histogram>& histograms);

// Per-pixel probability image: each cell's value is attributed to its whole
// patch footprint; overlapping footprints take the minimum (most suspicious).
Image project_to_pixels(const HeatMap& map);

// Marked grid cells tinted over the CXR; pixel output is deterministic.
void render_overlay(const Image& img, const HeatMap& map, const Mask& grid_mask,
                    const std::string& out_path);

void save_heatmap(const HeatMap& map, const std::string& csv_path,
                  const std::string& json_sidecar_path);
HeatMap load_heatmap(const std::string& csv_path, const std::string& json_sidecar_path);
void save_histogram_json(const Histogram& h, const std::string& path);

}  // namespace cxr
