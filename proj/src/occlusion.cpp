#include "cxr/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cxr/common.hpp"

using nlohmann::json;

namespace cxr {

namespace {

std::vector<int> grid_positions(int image_extent, int patch_side, int stride) {
  std::vector<int> pos;
  for (int c = 0; c + patch_side <= image_extent; c += stride) pos.push_back(c);
  if (pos.empty() || pos.back() != image_extent - patch_side)
    pos.push_back(image_extent - patch_side);
  return pos;
}

void validate_config(const Image& img, const OcclusionConfig& config) {
  if (config.patch_side <= 0) throw ValidationError("occlusion: patch_side must be positive");
  if (config.stride < 1) throw ValidationError("occlusion: stride must be >= 1");
  if (!(config.keep_fraction > 0.0 && config.keep_fraction <= 1.0))
    throw ValidationError("occlusion: keep_fraction must be in (0,1]");
  if (img.width < config.patch_side || img.height < config.patch_side)
    throw ValidationError("occlusion: image " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " smaller than patch " +
                          std::to_string(config.patch_side));
}

double score_occluded(const Image& img, const Scorer& scorer, int y, int x, int patch,
                      float fill) {
  Image occluded = img;
  for (int yy = y; yy < y + patch; ++yy)
    for (int xx = x; xx < x + patch; ++xx) occluded.at(yy, xx) = fill;
  return scorer(occluded);
}

HeatMap occlusion_impl(const Image& img, const std::string& image_id, const Scorer& scorer,
                       const OcclusionConfig& config, bool parallel) {
  validate_config(img, config);
  HeatMap map;
  map.image_id = image_id;
  map.ys = grid_positions(img.height, config.patch_side, config.stride);
  map.xs = grid_positions(img.width, config.patch_side, config.stride);
  map.rows = static_cast<int>(map.ys.size());
  map.cols = static_cast<int>(map.xs.size());
  map.p.assign(static_cast<size_t>(map.rows) * map.cols, 0.0);
  map.image_width = img.width;
  map.image_height = img.height;
  map.patch_side = config.patch_side;
  map.stride = config.stride;
  map.baseline_p = scorer(img);

  const int total = map.cells();
  bool failed = false;
  ErrorKind failure_kind = ErrorKind::numerical;
  std::string failure;
  auto record_failure = [&](int r, int c, const std::exception& e) {
    if (failed) return;
    failed = true;
    if (const auto* err = dynamic_cast<const Error*>(&e)) failure_kind = err->kind();
    failure = "scorer failed at patch (" + std::to_string(map.ys[r]) + "," +
              std::to_string(map.xs[c]) + "): " + e.what();
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int cell = 0; cell < total; ++cell) {
      const int r = cell / map.cols, c = cell % map.cols;
      try {
        map.p[cell] =
            score_occluded(img, scorer, map.ys[r], map.xs[c], config.patch_side, config.fill);
      } catch (const std::exception& e) {
#pragma omp critical
        record_failure(r, c, e);
      }
    }
  } else {
    for (int cell = 0; cell < total; ++cell) {
      const int r = cell / map.cols, c = cell % map.cols;
      try {
        map.p[cell] =
            score_occluded(img, scorer, map.ys[r], map.xs[c], config.patch_side, config.fill);
      } catch (const std::exception& e) {
        record_failure(r, c, e);
        break;
      }
    }
  }
  if (failed) throw Error(failure_kind, failure);
  for (double v : map.p)
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("scorer returned probability outside [0,1]");
  return map;
}

}  // namespace

HeatMap occlusion_map(const Image& img, const std::string& image_id, const Scorer& scorer,
                      const OcclusionConfig& config) {
  return occlusion_impl(img, image_id, scorer, config, true);
}

HeatMap occlusion_map_serial(const Image& img, const std::string& image_id, const Scorer& scorer,
                             const OcclusionConfig& config) {
  return occlusion_impl(img, image_id, scorer, config, false);
}

Mask binarize_lowest_fraction(const HeatMap& map, double keep_fraction, FractionBasis basis,
                              const std::optional<Mask>& roi) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ValidationError("binarize_lowest_fraction: keep_fraction must be in (0,1]");
  if (map.cells() == 0) throw ValidationError("binarize_lowest_fraction: empty map");
  if (roi && (roi->width != map.image_width || roi->height != map.image_height))
    throw ValidationError("binarize_lowest_fraction: ROI raster does not match image size");

  std::vector<int> candidates;
  candidates.reserve(map.cells());
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      if (roi) {
        const int cy = map.ys[r] + map.patch_side / 2;
        const int cx = map.xs[c] + map.patch_side / 2;
        if (!roi->at(cy, cx)) continue;
      }
      candidates.push_back(r * map.cols + c);
    }
  if (candidates.empty())
    throw ValidationError("binarize_lowest_fraction: no grid cell centers inside ROI");

  // Row-major tie-break: stable sort on probability keeps index order.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&map](int a, int b) { return map.p[a] < map.p[b]; });

  Mask grid(map.cols, map.rows);
  if (basis == FractionBasis::cells) {
    const auto k = static_cast<size_t>(keep_fraction * static_cast<double>(candidates.size()));
    for (size_t i = 0; i < k && i < candidates.size(); ++i)
      grid.px[static_cast<size_t>(candidates[i])] = 1;
  } else {
    // Area basis: take lowest cells until the union footprint reaches the
    // requested share of the image area.
    const double target =
        keep_fraction * static_cast<double>(map.image_width) * map.image_height;
    Mask footprint(map.image_width, map.image_height);
    long covered = 0;
    for (int idx : candidates) {
      if (static_cast<double>(covered) >= target) break;
      const int r = idx / map.cols, c = idx % map.cols;
      grid.px[static_cast<size_t>(idx)] = 1;
      for (int y = map.ys[r]; y < map.ys[r] + map.patch_side; ++y)
        for (int x = map.xs[c]; x < map.xs[c] + map.patch_side; ++x)
          if (!footprint.at(y, x)) {
            footprint.at(y, x) = 1;
            ++covered;
          }
    }
  }
  return grid;
}

Histogram heatmap_histogram(const HeatMap& map) {
  if (map.cells() == 0) throw ValidationError("heatmap_histogram: empty map");
  Histogram h;
  h.counts.assign(h.bins, 0);
  for (double v : map.p) {
    int bin = static_cast<int>(v * h.bins);
    bin = std::clamp(bin, 0, h.bins - 1);  // v == 1.0 lands in the last bin
    ++h.counts[bin];
  }
  h.freq.resize(h.bins);
  for (int b = 0; b < h.bins; ++b)
    h.freq[b] = static_cast<double>(h.counts[b]) / static_cast<double>(map.cells());
  return h;
}

Histogram average_histograms(const std::vector<Histogram>& histograms) {
  if (histograms.empty()) throw ValidationError("average_histograms: no histograms");
  const int bins = histograms.front().bins;
  Histogram out;
  out.bins = bins;
  out.counts.assign(bins, 0);
  out.freq.assign(bins, 0.0);
  for (const auto& h : histograms) {
    if (h.bins != bins || static_cast<int>(h.freq.size()) != bins)
      throw ValidationError("average_histograms: binning mismatch");
    for (int b = 0; b < bins; ++b) {
      out.freq[b] += h.freq[b];
      out.counts[b] += h.counts[b];
    }
  }
  for (int b = 0; b < bins; ++b) out.freq[b] /= static_cast<double>(histograms.size());
  return out;
}

Image project_to_pixels(const HeatMap& map) {
  Image out(map.image_width, map.image_height, 2.0f, 1.0f);
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      const auto v = static_cast<float>(map.at(r, c));
      for (int y = map.ys[r]; y < map.ys[r] + map.patch_side; ++y)
        for (int x = map.xs[c]; x < map.xs[c] + map.patch_side; ++x)
          out.at(y, x) = std::min(out.at(y, x), v);
    }
  for (auto& v : out.px)
    if (v > 1.0f) v = 1.0f;  // pixels no patch covers (stride > patch only)
  return out;
}

void render_overlay(const Image& img, const HeatMap& map, const Mask& grid_mask,
                    const std::string& out_path) {
  if (grid_mask.width != map.cols || grid_mask.height != map.rows)
    throw ValidationError("render_overlay: grid mask does not match heat map grid");
  if (img.width != map.image_width || img.height != map.image_height)
    throw ValidationError("render_overlay: image does not match heat map raster");

  Mask footprint(img.width, img.height);
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      if (!grid_mask.at(r, c)) continue;
      for (int y = map.ys[r]; y < map.ys[r] + map.patch_side; ++y)
        for (int x = map.xs[c]; x < map.xs[c] + map.patch_side; ++x) footprint.at(y, x) = 1;
    }

  std::vector<uint8_t> rgb(static_cast<size_t>(img.width) * img.height * 3);
  const double scale = 255.0 / img.max_value;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto g = static_cast<uint8_t>(
          std::lround(std::clamp(img.at(y, x) * scale, 0.0, 255.0)));
      const size_t i = (static_cast<size_t>(y) * img.width + x) * 3;
      if (footprint.at(y, x)) {
        rgb[i] = static_cast<uint8_t>(std::min(255, g + 96));  // red tint
        rgb[i + 1] = static_cast<uint8_t>(g / 2);
        rgb[i + 2] = static_cast<uint8_t>(g / 2);
      } else {
        rgb[i] = rgb[i + 1] = rgb[i + 2] = g;
      }
    }
  save_rgb(rgb, img.width, img.height, out_path);
}

void save_heatmap(const HeatMap& map, const std::string& csv_path,
                  const std::string& json_sidecar_path) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write heat map: " + csv_path);
  out.precision(17);
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) out << (c ? "," : "") << map.at(r, c);
    out << "\n";
  }
  json doc = {{"image_id", map.image_id},
              {"rows", map.rows},
              {"cols", map.cols},
              {"ys", map.ys},
              {"xs", map.xs},
              {"baseline_p", map.baseline_p},
              {"image_width", map.image_width},
              {"image_height", map.image_height},
              {"patch_side", map.patch_side},
              {"stride", map.stride}};
  std::ofstream side(json_sidecar_path);
  if (!side) throw IoError("cannot write heat map sidecar: " + json_sidecar_path);
  side << doc.dump(2) << "\n";
}

HeatMap load_heatmap(const std::string& csv_path, const std::string& json_sidecar_path) {
  std::ifstream side(json_sidecar_path);
  if (!side) throw IoError("cannot open heat map sidecar: " + json_sidecar_path);
  json doc;
  side >> doc;
  HeatMap map;
  map.image_id = doc.at("image_id").get<std::string>();
  map.rows = doc.at("rows").get<int>();
  map.cols = doc.at("cols").get<int>();
  map.ys = doc.at("ys").get<std::vector<int>>();
  map.xs = doc.at("xs").get<std::vector<int>>();
  map.baseline_p = doc.at("baseline_p").get<double>();
  map.image_width = doc.at("image_width").get<int>();
  map.image_height = doc.at("image_height").get<int>();
  map.patch_side = doc.at("patch_side").get<int>();
  map.stride = doc.at("stride").get<int>();

  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open heat map: " + csv_path);
  std::string line;
  while (std::getline(in, line))
    for (const auto& tok : split(trim(line), ','))
      if (!tok.empty()) map.p.push_back(std::stod(tok));
  if (static_cast<int>(map.p.size()) != map.cells())
    throw ValidationError("heat map CSV size does not match sidecar grid dims");
  return map;
}

void save_histogram_json(const Histogram& h, const std::string& path) {
  json doc = {{"bins", h.bins}, {"counts", h.counts}, {"freq", h.freq}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write histogram: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace cxr
