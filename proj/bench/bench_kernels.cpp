// Serial vs OpenMP timings for the hot kernels. Run with
//   ./build/bench/cxr_bench [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include <random>

#include "cxr/atlas.hpp"
#include "cxr/backbone.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/image.hpp"
#include "cxr/occlusion.hpp"
#include "cxr/radon.hpp"

namespace {

using namespace cxr;

Image bench_image(int side, uint64_t seed) {
  Image img(side, side, 0.0f, 255.0f);
  std::mt19937_64 rng(seed);
  for (auto& v : img.px) v = static_cast<float>((rng() >> 11) % 256);
  return img;
}

// --- occlusion map ---------------------------------------------------------

struct OcclusionFixture {
  Image img = bench_image(224, 1);
  StandInBackbone net{42};
  BackboneSpec spec;
  Scorer scorer;
  OcclusionConfig config;

  OcclusionFixture() {
    spec.family = Family::standin;
    scorer = [this](const Image& im) {
      const auto fv = net.extract(im, spec);
      double acc = 0.0;
      for (float v : fv.values) acc += v;
      return 0.5 + 0.5 * std::tanh(acc / (1.0 + std::abs(acc)) * 1e-3);
    };
    config.patch_side = 40;
    config.stride = 32;
  }
};

void BM_occlusion_serial(benchmark::State& state) {
  OcclusionFixture f;
  for (auto _ : state) {
    auto map = occlusion_map_serial(f.img, "bench", f.scorer, f.config);
    benchmark::DoNotOptimize(map.p.data());
  }
}
BENCHMARK(BM_occlusion_serial)->Unit(benchmark::kMillisecond);

void BM_occlusion_omp(benchmark::State& state) {
  OcclusionFixture f;
  for (auto _ : state) {
    auto map = occlusion_map(f.img, "bench", f.scorer, f.config);
    benchmark::DoNotOptimize(map.p.data());
  }
}
BENCHMARK(BM_occlusion_omp)->Unit(benchmark::kMillisecond);

// --- feature extraction over a batch of images -----------------------------

struct ExtractFixture {
  std::vector<Image> images;
  StandInBackbone net{42};
  BackboneSpec spec;

  ExtractFixture() {
    spec.family = Family::standin;
    for (int i = 0; i < 16; ++i) images.push_back(bench_image(128, 10 + i));
  }
};

void BM_extract_serial(benchmark::State& state) {
  ExtractFixture f;
  for (auto _ : state) {
    for (const auto& img : f.images) {
      auto fv = f.net.extract(img, f.spec);
      benchmark::DoNotOptimize(fv.values.data());
    }
  }
}
BENCHMARK(BM_extract_serial)->Unit(benchmark::kMillisecond);

void BM_extract_omp(benchmark::State& state) {
  ExtractFixture f;
  for (auto _ : state) {
    std::vector<FeatureVector> out(f.images.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < f.images.size(); ++i) out[i] = f.net.extract(f.images[i], f.spec);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_extract_omp)->Unit(benchmark::kMillisecond);

// --- exhaustive subset scan -------------------------------------------------

EnsemblePool bench_pool(int models, int images) {
  std::mt19937_64 rng(7);
  std::vector<std::vector<ProbabilityRecord>> per_model;
  for (int m = 0; m < models; ++m) {
    std::vector<ProbabilityRecord> records;
    char id[16];
    std::snprintf(id, sizeof(id), "m%02d", m);
    for (int i = 0; i < images; ++i) {
      const int label = i < images / 2 ? 1 : 0;
      const double base = label ? 0.65 : 0.35;
      double p = base + (static_cast<double>((rng() >> 11) % 1000) / 1000.0 - 0.5) * 0.4;
      records.push_back({"img" + std::to_string(i), id, std::clamp(p, 0.0, 1.0), label});
    }
    per_model.push_back(std::move(records));
  }
  return make_pool(per_model);
}

void BM_subsets_serial(benchmark::State& state) {
  const EnsemblePool pool = bench_pool(static_cast<int>(state.range(0)), 100);
  for (auto _ : state) {
    auto stats = scan_subset_stats_serial(pool, 0.5, SubsetMetric::accuracy);
    benchmark::DoNotOptimize(stats.data());
  }
}
BENCHMARK(BM_subsets_serial)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_subsets_omp(benchmark::State& state) {
  const EnsemblePool pool = bench_pool(static_cast<int>(state.range(0)), 100);
  for (auto _ : state) {
    auto stats = scan_subset_stats(pool, 0.5, SubsetMetric::accuracy);
    benchmark::DoNotOptimize(stats.data());
  }
}
BENCHMARK(BM_subsets_omp)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);

// --- radon signatures --------------------------------------------------------

void BM_radon_serial(benchmark::State& state) {
  std::vector<Image> images;
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) {
    images.push_back(bench_image(256, 30 + i));
    ids.push_back("img" + std::to_string(i));
  }
  const auto angles = default_angle_grid();
  for (auto _ : state) {
    auto sigs = radon_signatures_serial(images, angles, ids);
    benchmark::DoNotOptimize(sigs.data());
  }
}
BENCHMARK(BM_radon_serial)->Unit(benchmark::kMillisecond);

void BM_radon_omp(benchmark::State& state) {
  std::vector<Image> images;
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) {
    images.push_back(bench_image(256, 30 + i));
    ids.push_back("img" + std::to_string(i));
  }
  const auto angles = default_angle_grid();
  for (auto _ : state) {
    auto sigs = radon_signatures(images, angles, ids);
    benchmark::DoNotOptimize(sigs.data());
  }
}
BENCHMARK(BM_radon_omp)->Unit(benchmark::kMillisecond);

// --- block-matching correspondence ------------------------------------------

void BM_block_match_serial(benchmark::State& state) {
  const Image a = bench_image(256, 41);
  const Image b = bench_image(256, 42);
  for (auto _ : state) {
    auto field = block_matching_correspondence_serial(a, b);
    benchmark::DoNotOptimize(field.dx.data());
  }
}
BENCHMARK(BM_block_match_serial)->Unit(benchmark::kMillisecond);

void BM_block_match_omp(benchmark::State& state) {
  const Image a = bench_image(256, 41);
  const Image b = bench_image(256, 42);
  for (auto _ : state) {
    auto field = block_matching_correspondence(a, b);
    benchmark::DoNotOptimize(field.dx.data());
  }
}
BENCHMARK(BM_block_match_omp)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
