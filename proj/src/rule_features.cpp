#include "cxr/rule_features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cxr/common.hpp"

using nlohmann::json;

namespace cxr {

long mask_area(const Mask& mask) { return mask.area(); }

long perimeter_4conn(const Mask& mask) {
  long perimeter = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      const bool boundary = y == 0 || y == mask.height - 1 || x == 0 || x == mask.width - 1 ||
                            !mask.at(y - 1, x) || !mask.at(y + 1, x) || !mask.at(y, x - 1) ||
                            !mask.at(y, x + 1);
      perimeter += boundary;
    }
  return perimeter;
}

Mask mask_union(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height)
    throw ValidationError("mask_union: raster mismatch");
  Mask out(a.width, a.height);
  for (size_t i = 0; i < out.px.size(); ++i) out.px[i] = (a.px[i] || b.px[i]) ? 1 : 0;
  return out;
}

namespace {

struct Point {
  double x, y;
};

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain over set pixel centers.
std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const Point& a, const Point& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const size_t lower = k + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

Mask convex_hull_mask(const Mask& mask) {
  std::vector<Point> pts;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) pts.push_back({static_cast<double>(x), static_cast<double>(y)});
  Mask out(mask.width, mask.height);
  if (pts.empty()) return out;
  const std::vector<Point> hull = convex_hull(std::move(pts));
  if (hull.size() < 3) {
    for (const auto& p : hull) out.at(static_cast<int>(p.y), static_cast<int>(p.x)) = 1;
    return out;
  }
  // Scanline fill: intersect each row with the hull edges.
  constexpr double eps = 1e-9;
  for (int y = 0; y < mask.height; ++y) {
    double min_x = 1e18, max_x = -1e18;
    bool hit = false;
    for (size_t i = 0; i < hull.size(); ++i) {
      const Point& a = hull[i];
      const Point& b = hull[(i + 1) % hull.size()];
      const double ylo = std::min(a.y, b.y), yhi = std::max(a.y, b.y);
      if (y < ylo - eps || y > yhi + eps) continue;
      hit = true;
      if (std::abs(a.y - b.y) < eps) {
        min_x = std::min({min_x, a.x, b.x});
        max_x = std::max({max_x, a.x, b.x});
      } else {
        const double t = (y - a.y) / (b.y - a.y);
        const double x = a.x + t * (b.x - a.x);
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
      }
    }
    if (!hit) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - eps)));
    const int x1 = std::min(mask.width - 1, static_cast<int>(std::floor(max_x + eps)));
    for (int x = x0; x <= x1; ++x) out.at(y, x) = 1;
  }
  return out;
}

namespace {

void require_nonempty(const Mask& mask, const char* name) {
  if (mask.empty() || mask.area() == 0)
    throw ValidationError(std::string("degenerate segmentation: ") + name + " mask is empty");
}

// Widest row extent (outermost set columns) over all rows.
long max_row_extent(const Mask& mask) {
  long best = 0;
  for (int y = 0; y < mask.height; ++y) {
    int left = -1, right = -1;
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        if (left < 0) left = x;
        right = x;
      }
    if (left >= 0) best = std::max(best, static_cast<long>(right - left + 1));
  }
  return best;
}

}  // namespace

RuleFeatures compute_rule_features(const Segmentation& seg) {
  require_nonempty(seg.heart, "heart");
  require_nonempty(seg.lung_left, "lung_left");
  require_nonempty(seg.lung_right, "lung_right");
  if (seg.lung_left.width != seg.lung_right.width ||
      seg.lung_left.height != seg.lung_right.height ||
      seg.heart.width != seg.lung_left.width || seg.heart.height != seg.lung_left.height)
    throw ValidationError("compute_rule_features: mask raster mismatch");

  RuleFeatures f;

  // 1D: widest heart extent over the widest extent spanning both lungs'
  // outer margins.
  const Mask lungs = mask_union(seg.lung_left, seg.lung_right);
  const long heart_width = max_row_extent(seg.heart);
  const long thoracic_width = max_row_extent(lungs);
  f.ctr_1d = static_cast<double>(heart_width) / static_cast<double>(thoracic_width);

  // 2D: thoracic region taken as the union of the lungs' filled convex hulls.
  const Mask thoracic =
      mask_union(convex_hull_mask(seg.lung_left), convex_hull_mask(seg.lung_right));
  f.ctr_2d = static_cast<double>(perimeter_4conn(seg.heart)) /
             static_cast<double>(perimeter_4conn(thoracic));

  f.ctar = static_cast<double>(mask_area(seg.heart)) /
           static_cast<double>(mask_area(seg.lung_left) + mask_area(seg.lung_right));

  if (!(f.ctr_1d > 0.0) || !(f.ctr_2d > 0.0) || !(f.ctar > 0.0) || !std::isfinite(f.ctr_1d) ||
      !std::isfinite(f.ctr_2d) || !std::isfinite(f.ctar))
    throw ValidationError("compute_rule_features: non-positive or non-finite feature");
  return f;
}

void save_rule_features_json(const RuleFeatures& f, const std::string& path) {
  json doc = {{"ctr_1d", f.ctr_1d}, {"ctr_2d", f.ctr_2d}, {"ctar", f.ctar}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write rule features: " + path);
  out << doc.dump(2) << "\n";
}

RuleFeatures load_rule_features_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rule features: " + path);
  json doc;
  in >> doc;
  return {doc.at("ctr_1d").get<double>(), doc.at("ctr_2d").get<double>(),
          doc.at("ctar").get<double>()};
}

}  // namespace cxr
