#pragma once

#include <string>
#include <vector>

#include "cxr/image.hpp"

namespace cxr {

// Per-angle line-integral projections, each normalized to a distribution.
// Angle 0 projects onto the x axis (column sums), 90 onto y (row sums).
struct RadonSignature {
  std::string image_id;
  std::vector<double> angles;                      // degrees in [0, 90]
  std::vector<std::vector<double>> projections;    // one distribution per angle
};

// 0..90 inclusive in 1-degree steps (91 angles).
std::vector<double> default_angle_grid();

RadonSignature radon_signature(const Image& img, const std::vector<double>& angles,
                               const std::string& image_id = "");

// Batch signature computation; the parallel kernel maps over images.
std::vector<RadonSignature> radon_signatures(const std::vector<Image>& images,
                                             const std::vector<double>& angles,
                                             const std::vector<std::string>& ids);
std::vector<RadonSignature> radon_signatures_serial(const std::vector<Image>& images,
                                                    const std::vector<double>& angles,
                                                    const std::vector<std::string>& ids);

// -ln sum(sqrt(a_i * b_i)) over two equal-length distributions. Disjoint
// support returns the sentinel below so sorting stays total.
inline constexpr double kBhattacharyyaDisjoint = 1e9;
double bhattacharyya_distance(const std::vector<double>& a, const std::vector<double>& b);

// Mean Bhattacharyya distance across the shared angle grid.
double signature_distance(const RadonSignature& a, const RadonSignature& b);

}  // namespace cxr
