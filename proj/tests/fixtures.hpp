#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "cxr/image.hpp"
#include "cxr/probability.hpp"

namespace cxr::testfx {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / (tag + "_" + std::to_string(counter_++));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("cannot create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

// Deterministic pseudo-random grayscale image.
inline Image make_noise_image(int w, int h, uint64_t seed) {
  Image img(w, h, 0.0f, 255.0f);
  std::mt19937_64 rng(seed);
  for (auto& v : img.px)
    v = static_cast<float>((rng() >> 11) % 256);
  return img;
}

// Smooth gradient with a bright blob; structured enough for feature taps.
inline Image make_blob_image(int w, int h, double cx, double cy, double radius,
                             uint64_t noise_seed) {
  Image img(w, h, 0.0f, 255.0f);
  std::mt19937_64 rng(noise_seed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double d2 = dx * dx + dy * dy;
      double v = 60.0 + 40.0 * x / w + 150.0 * std::exp(-d2 / (2.0 * radius * radius));
      v += static_cast<double>((rng() >> 11) % 16);
      img.at(y, x) = static_cast<float>(std::min(v, 255.0));
    }
  return img;
}

// Synthetic dataset on disk: n_pos abnormal (big central blob) + n_neg normal
// (small offset blob), PGM images plus annotations.csv.
inline void write_synthetic_dataset(const std::filesystem::path& dir, int n_pos, int n_neg,
                                    const std::string& tag, int side = 48) {
  std::filesystem::create_directories(dir);
  std::ofstream ann(dir / "annotations.csv");
  ann << "id,filename,view,labels\n";
  for (int i = 0; i < n_pos; ++i) {
    const std::string id = "pos" + std::to_string(i);
    Image img = make_blob_image(side, side, side / 2.0, side / 2.0, side / 3.5,
                                1000 + static_cast<uint64_t>(i));
    save_pgm(img, (dir / (id + ".pgm")).string());
    ann << id << "," << id << ".pgm,frontal," << tag << "\n";
  }
  for (int i = 0; i < n_neg; ++i) {
    const std::string id = "neg" + std::to_string(i);
    Image img = make_blob_image(side, side, side / 4.0, side / 4.0, side / 8.0,
                                2000 + static_cast<uint64_t>(i));
    save_pgm(img, (dir / (id + ".pgm")).string());
    ann << id << "," << id << ".pgm,frontal,\n";
  }
}

inline std::vector<ProbabilityRecord> make_records(const std::vector<double>& probs,
                                                   const std::vector<int>& labels,
                                                   const std::string& model_id = "m") {
  std::vector<ProbabilityRecord> out;
  for (size_t i = 0; i < probs.size(); ++i)
    out.push_back({"img" + std::to_string(i), model_id, probs[i], labels[i]});
  return out;
}

// Random probability records with both classes guaranteed.
inline std::vector<ProbabilityRecord> random_records(int n, uint64_t seed,
                                                     const std::string& model_id = "m") {
  std::mt19937_64 rng(seed);
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) {
    probs.push_back(static_cast<double>((rng() >> 11) % 10001) / 10000.0);
    labels.push_back(i < 2 ? i : static_cast<int>(rng() % 2));  // both classes present
  }
  return make_records(probs, labels, model_id);
}

}  // namespace cxr::testfx
