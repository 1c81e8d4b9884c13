#include "cxr/radon.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cxr/common.hpp"

namespace cxr {

std::vector<double> default_angle_grid() {
  std::vector<double> angles(91);
  for (int a = 0; a <= 90; ++a) angles[a] = a;
  return angles;
}

RadonSignature radon_signature(const Image& img, const std::vector<double>& angles,
                               const std::string& image_id) {
  if (img.empty()) throw ValidationError("radon_signature: empty image");
  if (angles.empty()) throw ValidationError("radon_signature: empty angle list");
  for (double a : angles)
    if (a < 0.0 || a > 90.0)
      throw ValidationError("radon_signature: angle outside [0,90]: " + std::to_string(a));

  RadonSignature sig;
  sig.image_id = image_id;
  sig.angles = angles;
  sig.projections.resize(angles.size());

  for (size_t ai = 0; ai < angles.size(); ++ai) {
    const double theta = angles[ai] * std::numbers::pi / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    // Pixel (x,y) contributes to the bin of its rotated coordinate
    // x' = x*cos + y*sin; nearest-bin accumulation makes 0/90 degrees exact
    // column/row sums.
    const double max_coord = ct * (img.width - 1) + st * (img.height - 1);
    const int bins = static_cast<int>(std::lround(max_coord)) + 1;
    std::vector<double>& proj = sig.projections[ai];
    proj.assign(bins, 0.0);
    double total = 0.0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double v = img.at(y, x);
        if (v < 0.0f) throw ValidationError("radon_signature: negative intensity");
        const int bin =
            std::clamp(static_cast<int>(std::lround(ct * x + st * y)), 0, bins - 1);
        proj[bin] += v;
        total += v;
      }
    if (total <= 0.0)
      throw ValidationError("radon_signature: zero-mass image, cannot normalize");
    for (double& v : proj) v /= total;
  }
  return sig;
}

namespace {

std::vector<RadonSignature> signatures_impl(const std::vector<Image>& images,
                                            const std::vector<double>& angles,
                                            const std::vector<std::string>& ids, bool parallel) {
  if (images.size() != ids.size())
    throw ValidationError("radon_signatures: images/ids length mismatch");
  std::vector<RadonSignature> out(images.size());
  bool failed = false;
  std::string failure;
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < images.size(); ++i) {
      try {
        out[i] = radon_signature(images[i], angles, ids[i]);
      } catch (const std::exception& e) {
#pragma omp critical
        if (!failed) {
          failed = true;
          failure = e.what();
        }
      }
    }
  } else {
    for (size_t i = 0; i < images.size(); ++i)
      out[i] = radon_signature(images[i], angles, ids[i]);
  }
  if (failed) throw ValidationError(failure);
  return out;
}

}  // namespace

std::vector<RadonSignature> radon_signatures(const std::vector<Image>& images,
                                             const std::vector<double>& angles,
                                             const std::vector<std::string>& ids) {
  return signatures_impl(images, angles, ids, true);
}

std::vector<RadonSignature> radon_signatures_serial(const std::vector<Image>& images,
                                                    const std::vector<double>& angles,
                                                    const std::vector<std::string>& ids) {
  return signatures_impl(images, angles, ids, false);
}

double bhattacharyya_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ValidationError("bhattacharyya_distance: length mismatch (" +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  if (a.empty()) throw ValidationError("bhattacharyya_distance: empty distributions");
  const bool equal = a == b;
  double sum_a = 0.0, sum_b = 0.0, bc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0)
      throw ValidationError("bhattacharyya_distance: negative probability");
    sum_a += a[i];
    sum_b += b[i];
    bc += std::sqrt(a[i] * b[i]);
  }
  if (std::abs(sum_a - 1.0) > 1e-9 || std::abs(sum_b - 1.0) > 1e-9)
    throw ValidationError("bhattacharyya_distance: inputs must be normalized distributions");
  if (equal) return 0.0;
  if (bc <= 0.0) return kBhattacharyyaDisjoint;
  // Rounding can push the coefficient past 1; clamp keeps the distance >= 0.
  return bc >= 1.0 ? 0.0 : -std::log(bc);
}

double signature_distance(const RadonSignature& a, const RadonSignature& b) {
  if (a.angles != b.angles)
    throw ValidationError("signature_distance: signatures use different angle grids");
  double sum = 0.0;
  for (size_t i = 0; i < a.projections.size(); ++i)
    sum += bhattacharyya_distance(a.projections[i], b.projections[i]);
  return sum / static_cast<double>(a.projections.size());
}

}  // namespace cxr
