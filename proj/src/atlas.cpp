#include "cxr/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "cxr/common.hpp"
#include "cxr/manifest.hpp"

namespace fs = std::filesystem;

namespace cxr {

std::vector<std::string> rank_similar_atlases(const RadonSignature& probe,
                                              const std::vector<RadonSignature>& atlas_signatures,
                                              int k) {
  if (k <= 0) throw ValidationError("rank_similar_atlases: k must be positive");
  if (k > static_cast<int>(atlas_signatures.size()))
    throw ValidationError("rank_similar_atlases: k=" + std::to_string(k) +
                          " exceeds atlas pool of " +
                          std::to_string(atlas_signatures.size()));
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(atlas_signatures.size());
  for (const auto& sig : atlas_signatures)
    scored.emplace_back(signature_distance(probe, sig), sig.image_id);
  std::sort(scored.begin(), scored.end());  // distance, then id
  std::vector<std::string> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

namespace {

Image gradient_magnitude(const Image& img) {
  Image g(img.width, img.height, 0.0f, img.max_value);
  for (int y = 1; y + 1 < img.height; ++y)
    for (int x = 1; x + 1 < img.width; ++x) {
      const double gx = img.at(y, x + 1) - img.at(y, x - 1);
      const double gy = img.at(y + 1, x) - img.at(y - 1, x);
      g.at(y, x) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  return g;
}

struct ControlGrid {
  std::vector<int> ys, xs;
};

ControlGrid control_grid(int width, int height, int spacing) {
  ControlGrid grid;
  for (int y = 0; y < height; y += spacing) grid.ys.push_back(y);
  if (grid.ys.back() != height - 1) grid.ys.push_back(height - 1);
  for (int x = 0; x < width; x += spacing) grid.xs.push_back(x);
  if (grid.xs.back() != width - 1) grid.xs.push_back(width - 1);
  return grid;
}

double patch_ssd(const Image& a, int ay, int ax, const Image& b, int by, int bx, int radius) {
  double ssd = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const int y0 = std::clamp(ay + dy, 0, a.height - 1);
      const int x0 = std::clamp(ax + dx, 0, a.width - 1);
      const int y1 = std::clamp(by + dy, 0, b.height - 1);
      const int x1 = std::clamp(bx + dx, 0, b.width - 1);
      const double d = static_cast<double>(a.at(y0, x0)) - b.at(y1, x1);
      ssd += d * d;
    }
  return ssd;
}

DisplacementField block_matching_impl(const Image& atlas_image, const Image& test_image,
                                      bool parallel) {
  if (atlas_image.width != test_image.width || atlas_image.height != test_image.height)
    throw ValidationError("block matching requires equal rasters; resample first");
  const Image ga = gradient_magnitude(atlas_image);
  const Image gt = gradient_magnitude(test_image);

  const int spacing = std::max(8, atlas_image.width / 16);
  const int radius = std::max(4, spacing / 2);
  const int search = std::max(6, atlas_image.width / 10);
  const int coarse_step = std::max(2, search / 8);
  const ControlGrid grid = control_grid(atlas_image.width, atlas_image.height, spacing);
  const int gh = static_cast<int>(grid.ys.size());
  const int gw = static_cast<int>(grid.xs.size());
  std::vector<float> cdx(static_cast<size_t>(gh) * gw, 0.0f);
  std::vector<float> cdy(static_cast<size_t>(gh) * gw, 0.0f);

  const int n_points = gh * gw;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int p = 0; p < n_points; ++p) {
    const int gy = p / gw, gx = p % gw;
    const int ay = grid.ys[gy], ax = grid.xs[gx];
    int best_dy = 0, best_dx = 0;
    double best = patch_ssd(ga, ay, ax, gt, ay, ax, radius);
    // Coarse sweep on a grid centered on zero offset, then a full +/-step
    // refinement around the winner.
    const int span = (search / coarse_step) * coarse_step;
    for (int dy = -span; dy <= span; dy += coarse_step)
      for (int dx = -span; dx <= span; dx += coarse_step) {
        const double ssd = patch_ssd(ga, ay, ax, gt, ay + dy, ax + dx, radius);
        if (ssd < best) {
          best = ssd;
          best_dy = dy;
          best_dx = dx;
        }
      }
    const int cy = best_dy, cx = best_dx;
    for (int dy = cy - coarse_step; dy <= cy + coarse_step; ++dy)
      for (int dx = cx - coarse_step; dx <= cx + coarse_step; ++dx) {
        const double ssd = patch_ssd(ga, ay, ax, gt, ay + dy, ax + dx, radius);
        if (ssd < best) {
          best = ssd;
          best_dy = dy;
          best_dx = dx;
        }
      }
    cdy[p] = static_cast<float>(best_dy);
    cdx[p] = static_cast<float>(best_dx);
  }

  // Smooth dense field by bilinear interpolation between control points.
  DisplacementField field(atlas_image.width, atlas_image.height);
  for (int y = 0; y < atlas_image.height; ++y) {
    const auto yit = std::upper_bound(grid.ys.begin(), grid.ys.end(), y);
    const int y1 = static_cast<int>(std::min<ptrdiff_t>(yit - grid.ys.begin(), gh - 1));
    const int y0 = std::max(y1 - 1, 0);
    const double wy = grid.ys[y1] == grid.ys[y0]
                          ? 0.0
                          : static_cast<double>(y - grid.ys[y0]) / (grid.ys[y1] - grid.ys[y0]);
    for (int x = 0; x < atlas_image.width; ++x) {
      const auto xit = std::upper_bound(grid.xs.begin(), grid.xs.end(), x);
      const int x1 = static_cast<int>(std::min<ptrdiff_t>(xit - grid.xs.begin(), gw - 1));
      const int x0 = std::max(x1 - 1, 0);
      const double wx = grid.xs[x1] == grid.xs[x0]
                            ? 0.0
                            : static_cast<double>(x - grid.xs[x0]) / (grid.xs[x1] - grid.xs[x0]);
      auto lerp2 = [&](const std::vector<float>& c) {
        const double top = c[static_cast<size_t>(y0) * gw + x0] * (1.0 - wx) +
                           c[static_cast<size_t>(y0) * gw + x1] * wx;
        const double bot = c[static_cast<size_t>(y1) * gw + x0] * (1.0 - wx) +
                           c[static_cast<size_t>(y1) * gw + x1] * wx;
        return top * (1.0 - wy) + bot * wy;
      };
      field.dx[field.idx(y, x)] = static_cast<float>(lerp2(cdx));
      field.dy[field.idx(y, x)] = static_cast<float>(lerp2(cdy));
    }
  }
  return field;
}

}  // namespace

DisplacementField block_matching_correspondence(const Image& atlas_image,
                                                const Image& test_image) {
  return block_matching_impl(atlas_image, test_image, true);
}

DisplacementField block_matching_correspondence_serial(const Image& atlas_image,
                                                       const Image& test_image) {
  return block_matching_impl(atlas_image, test_image, false);
}

CorrespondenceFn default_correspondence() {
  return [](const Image& a, const Image& t) { return block_matching_correspondence(a, t); };
}

CorrespondenceFn identity_correspondence() {
  return [](const Image& a, const Image&) { return DisplacementField(a.width, a.height); };
}

Mask warp_mask(const Mask& mask, const DisplacementField& field, int out_width, int out_height) {
  if (mask.width != field.width || mask.height != field.height)
    throw ValidationError("warp_mask: field raster does not match mask");
  // Inverse-sampled warp: target pixel t reads source t - d, with d taken at
  // t. First-order inverse of the forward field; exact for translations and
  // hole-free for the smooth fields the block matcher produces.
  Mask out(out_width, out_height);
  for (int ty = 0; ty < out_height; ++ty) {
    const int fy = std::clamp(ty, 0, field.height - 1);
    for (int tx = 0; tx < out_width; ++tx) {
      const int fx = std::clamp(tx, 0, field.width - 1);
      const size_t i = field.idx(fy, fx);
      const int sx = static_cast<int>(std::lround(tx - field.dx[i]));
      const int sy = static_cast<int>(std::lround(ty - field.dy[i]));
      if (sx >= 0 && sx < mask.width && sy >= 0 && sy < mask.height && mask.at(sy, sx))
        out.at(ty, tx) = 1;
    }
  }
  return out;
}

namespace {

Segmentation transfer_impl(const Image& test_image, const std::string& test_id,
                           const std::vector<AtlasEntry>& ranked_atlases,
                           const CorrespondenceFn& correspondence, bool parallel) {
  if (ranked_atlases.empty()) throw ValidationError("transfer_segmentation: no atlases");
  const int w = test_image.width, h = test_image.height;
  struct Warped {
    bool ok = false;
    Mask lung_left, lung_right, heart;
  };
  std::vector<Warped> warped(ranked_atlases.size());

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (size_t i = 0; i < ranked_atlases.size(); ++i) {
    const auto& atlas = ranked_atlases[i];
    try {
      const DisplacementField field = correspondence(atlas.image, test_image);
      warped[i].lung_left = warp_mask(atlas.lung_left, field, w, h);
      warped[i].lung_right = warp_mask(atlas.lung_right, field, w, h);
      warped[i].heart = warp_mask(atlas.heart, field, w, h);
      warped[i].ok = true;
    } catch (const std::exception& e) {
#pragma omp critical
      std::cerr << "warning: dropping atlas " << atlas.id << ": " << e.what() << "\n";
    }
  }

  Segmentation seg;
  seg.image_id = test_id;
  int votes = 0;
  for (size_t i = 0; i < warped.size(); ++i)
    if (warped[i].ok) {
      ++votes;
      seg.provenance.push_back(ranked_atlases[i].id);
    }
  if (votes == 0)
    throw ValidationError("transfer_segmentation: correspondence failed for every atlas");

  auto majority = [&](auto member) {
    Mask out(w, h);
    std::vector<int> tally(static_cast<size_t>(w) * h, 0);
    for (const auto& wset : warped) {
      if (!wset.ok) continue;
      const Mask& m = wset.*member;
      for (size_t j = 0; j < m.px.size(); ++j) tally[j] += m.px[j];
    }
    for (size_t j = 0; j < tally.size(); ++j) out.px[j] = 2 * tally[j] > votes ? 1 : 0;
    return out;
  };
  seg.lung_left = majority(&Warped::lung_left);
  seg.lung_right = majority(&Warped::lung_right);
  seg.heart = majority(&Warped::heart);
  return seg;
}

}  // namespace

Segmentation transfer_segmentation(const Image& test_image, const std::string& test_id,
                                   const std::vector<AtlasEntry>& ranked_atlases,
                                   const CorrespondenceFn& correspondence) {
  return transfer_impl(test_image, test_id, ranked_atlases, correspondence, true);
}

Segmentation transfer_segmentation_serial(const Image& test_image, const std::string& test_id,
                                          const std::vector<AtlasEntry>& ranked_atlases,
                                          const CorrespondenceFn& correspondence) {
  return transfer_impl(test_image, test_id, ranked_atlases, correspondence, false);
}

std::vector<AtlasEntry> load_atlas(const std::string& jsrt_root, int resize_to) {
  const DatasetManifest manifest = load_manifest(jsrt_root, Source::jsrt);
  std::vector<AtlasEntry> atlas;
  for (const auto& r : manifest.records) {
    if (r.masks.lung_left.empty() || r.masks.lung_right.empty() || r.masks.heart.empty())
      continue;  // atlas entries need all three gold masks
    AtlasEntry e;
    e.id = r.id;
    e.image = load_image(r.path);
    e.lung_left = load_mask(r.masks.lung_left);
    e.lung_right = load_mask(r.masks.lung_right);
    e.heart = load_mask(r.masks.heart);
    if (resize_to > 0) {
      e.image = resize_bilinear(e.image, resize_to, resize_to);
      auto resize_mask = [resize_to](const Mask& m) {
        Image tmp(m.width, m.height, 0.0f, 1.0f);
        for (size_t i = 0; i < m.px.size(); ++i) tmp.px[i] = m.px[i];
        Image rs = resize_bilinear(tmp, resize_to, resize_to);
        Mask out(resize_to, resize_to);
        for (size_t i = 0; i < rs.px.size(); ++i) out.px[i] = rs.px[i] >= 0.5f ? 1 : 0;
        return out;
      };
      e.lung_left = resize_mask(e.lung_left);
      e.lung_right = resize_mask(e.lung_right);
      e.heart = resize_mask(e.heart);
    }
    if (e.lung_left.width != e.image.width || e.lung_left.height != e.image.height)
      throw ValidationError("atlas " + e.id + ": mask raster does not match image");
    atlas.push_back(std::move(e));
  }
  if (atlas.empty())
    throw ValidationError("no atlas entries with complete masks under " + jsrt_root);
  return atlas;
}

}  // namespace cxr
