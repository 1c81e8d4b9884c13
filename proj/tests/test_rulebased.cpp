#include <doctest.h>

#include <cmath>
#include <random>

#include "cxr/atlas.hpp"
#include "cxr/common.hpp"
#include "cxr/radon.hpp"
#include "cxr/rule_features.hpp"
#include "cxr/svm.hpp"
#include "fixtures.hpp"

using namespace cxr;

TEST_CASE("radon projections: uniform columns, single spikes, exact 0/90 sums") {
  SUBCASE("constant image at angle 0 is uniform over columns") {
    const Image img(10, 6, 3.0f);
    const RadonSignature sig = radon_signature(img, {0.0}, "c");
    REQUIRE(sig.projections.size() == 1);
    REQUIRE(sig.projections[0].size() == 10);
    for (double v : sig.projections[0]) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
  }

  SUBCASE("a single bright pixel projects to a single spike at every angle") {
    Image img(12, 12, 0.0f);
    img.at(5, 7) = 100.0f;
    const RadonSignature sig = radon_signature(img, {0.0, 30.0, 60.0, 90.0}, "s");
    for (const auto& proj : sig.projections) {
      int nonzero = 0;
      for (double v : proj)
        if (v > 0.0) {
          ++nonzero;
          CHECK(v == 1.0);
        }
      CHECK(nonzero == 1);
    }
  }

  SUBCASE("8x8 fixture: 0 and 90 degrees equal direct column/row sums") {
    const Image img = testfx::make_noise_image(8, 8, 77);
    double total = 0.0;
    for (float v : img.px) total += v;
    const RadonSignature sig = radon_signature(img, {0.0, 90.0}, "f");
    REQUIRE(sig.projections[0].size() == 8);
    REQUIRE(sig.projections[1].size() == 8);
    for (int x = 0; x < 8; ++x) {
      double col = 0.0;
      for (int y = 0; y < 8; ++y) col += img.at(y, x);
      CHECK(sig.projections[0][x] == doctest::Approx(col / total).epsilon(1e-12));
    }
    for (int y = 0; y < 8; ++y) {
      double row = 0.0;
      for (int x = 0; x < 8; ++x) row += img.at(y, x);
      CHECK(sig.projections[1][y] == doctest::Approx(row / total).epsilon(1e-12));
    }
  }

  SUBCASE("every projection normalizes to 1 within 1e-9") {
    const Image img = testfx::make_blob_image(40, 32, 20, 16, 8, 3);
    const RadonSignature sig = radon_signature(img, default_angle_grid(), "n");
    CHECK(sig.projections.size() == 91);
    for (const auto& proj : sig.projections) {
      double sum = 0.0;
      for (double v : proj) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }

  SUBCASE("validation") {
    CHECK_THROWS_AS(radon_signature(Image(4, 4, 1.0f), {}), ValidationError);
    CHECK_THROWS_AS(radon_signature(Image(4, 4, 1.0f), {120.0}), ValidationError);
    CHECK_THROWS_AS(radon_signature(Image(4, 4, 0.0f), {0.0}), ValidationError);  // zero mass
  }

  SUBCASE("batch parallel equals serial") {
    std::vector<Image> images;
    std::vector<std::string> ids;
    for (int i = 0; i < 6; ++i) {
      images.push_back(testfx::make_noise_image(24, 24, 100 + i));
      ids.push_back("img" + std::to_string(i));
    }
    const auto angles = default_angle_grid();
    const auto par = radon_signatures(images, angles, ids);
    const auto ser = radon_signatures_serial(images, angles, ids);
    REQUIRE(par.size() == ser.size());
    for (size_t i = 0; i < par.size(); ++i) CHECK(par[i].projections == ser[i].projections);
  }
}

TEST_CASE("bhattacharyya distance: hand value, symmetry, zero iff equal, sentinel") {
  const std::vector<double> a = {0.5, 0.5};
  const std::vector<double> b = {0.9, 0.1};
  // hand computation: -ln(sqrt(0.45) + sqrt(0.05)) = 0.1115717756...
  const double hand = -std::log(std::sqrt(0.45) + std::sqrt(0.05));
  CHECK(bhattacharyya_distance(a, b) == doctest::Approx(hand).epsilon(1e-12));
  CHECK(bhattacharyya_distance(a, b) == doctest::Approx(0.11157177565710485).epsilon(1e-9));
  CHECK(bhattacharyya_distance(a, b) == bhattacharyya_distance(b, a));

  CHECK(bhattacharyya_distance(a, a) == 0.0);
  CHECK(bhattacharyya_distance({1.0, 0.0}, {0.0, 1.0}) == kBhattacharyyaDisjoint);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 16);
    std::vector<double> p(n), q(n);
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] = static_cast<double>(1 + rng() % 1000);
      q[i] = static_cast<double>(1 + rng() % 1000);
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    const double pq = bhattacharyya_distance(p, q);
    CHECK(pq >= 0.0);
    CHECK(pq == bhattacharyya_distance(q, p));
    CHECK(bhattacharyya_distance(p, p) == 0.0);
    if (p != q) CHECK(pq > 0.0);
  }

  CHECK_THROWS_AS(bhattacharyya_distance({0.5, 0.5}, {1.0}), ValidationError);
  CHECK_THROWS_AS(bhattacharyya_distance({0.5, 0.4}, {0.5, 0.5}), ValidationError);
}

TEST_CASE("atlas ranking: self-retrieval first, hand-ranked pair, capacity error") {
  const auto angles = default_angle_grid();
  const Image probe_img = testfx::make_blob_image(32, 32, 16, 16, 6, 1);
  const Image near_img = testfx::make_blob_image(32, 32, 17, 15, 6, 2);
  const Image far_img = testfx::make_noise_image(32, 32, 3);

  const RadonSignature probe = radon_signature(probe_img, angles, "probe");
  const RadonSignature self = radon_signature(probe_img, angles, "self");
  const RadonSignature near_sig = radon_signature(near_img, angles, "near");
  const RadonSignature far_sig = radon_signature(far_img, angles, "far");

  const auto ranked = rank_similar_atlases(probe, {far_sig, self, near_sig}, 3);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0] == "self");
  CHECK(signature_distance(probe, self) == 0.0);

  // k=1 on a 2-atlas pool: the nearer one wins, verified by direct distances
  const double d_near = signature_distance(probe, near_sig);
  const double d_far = signature_distance(probe, far_sig);
  REQUIRE(d_near < d_far);
  CHECK(rank_similar_atlases(probe, {far_sig, near_sig}, 1)[0] == "near");

  CHECK_THROWS_AS(rank_similar_atlases(probe, {self}, 5), ValidationError);
}

namespace {

AtlasEntry square_atlas(const std::string& id, int side, int x0, int y0, int sz) {
  AtlasEntry e;
  e.id = id;
  e.image = testfx::make_noise_image(side, side, 11);
  e.lung_left = Mask(side, side);
  e.lung_right = Mask(side, side);
  e.heart = Mask(side, side);
  for (int y = y0; y < y0 + sz; ++y)
    for (int x = x0; x < x0 + sz; ++x) e.heart.at(y, x) = 1;
  for (int y = y0; y < y0 + sz; ++y) {
    for (int x = 2; x < 2 + sz; ++x) e.lung_left.at(y, x) = 1;
    for (int x = side - 2 - sz; x < side - 2; ++x) e.lung_right.at(y, x) = 1;
  }
  return e;
}

}  // namespace

TEST_CASE("segmentation transfer: identity, translation, majority vote, failures") {
  const int side = 48;
  const AtlasEntry atlas = square_atlas("a0", side, 20, 18, 8);
  const Image test_img = testfx::make_noise_image(side, side, 12);

  SUBCASE("identity correspondence with k=1 reproduces the atlas masks") {
    const Segmentation seg =
        transfer_segmentation(test_img, "t", {atlas}, identity_correspondence());
    CHECK(seg.heart.px == atlas.heart.px);
    CHECK(seg.lung_left.px == atlas.lung_left.px);
    CHECK(seg.lung_right.px == atlas.lung_right.px);
    CHECK(seg.provenance == std::vector<std::string>{"a0"});
  }

  SUBCASE("pure translation moves the mask by the known offset") {
    const int dx = 5, dy = -3;
    CorrespondenceFn translate = [dx, dy](const Image& a, const Image&) {
      DisplacementField f(a.width, a.height);
      for (auto& v : f.dx) v = dx;
      for (auto& v : f.dy) v = dy;
      return f;
    };
    const Segmentation seg = transfer_segmentation(test_img, "t", {atlas}, translate);
    Mask expected(side, side);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        if (atlas.heart.at(y, x)) {
          const int ty = y + dy, tx = x + dx;
          if (ty >= 0 && ty < side && tx >= 0 && tx < side) expected.at(ty, tx) = 1;
        }
    CHECK(seg.heart.px == expected.px);
  }

  SUBCASE("5-way vote sets a pixel marked by 3 atlases") {
    std::vector<AtlasEntry> atlases;
    for (int i = 0; i < 5; ++i) {
      // three atlases put the heart at (20,18), two elsewhere
      atlases.push_back(i < 3 ? square_atlas("a" + std::to_string(i), side, 20, 18, 8)
                              : square_atlas("a" + std::to_string(i), side, 4, 30, 8));
    }
    const Segmentation seg =
        transfer_segmentation(test_img, "t", atlases, identity_correspondence());
    CHECK(seg.heart.at(21, 22) == 1);  // 3 of 5 -> set
    CHECK(seg.heart.at(33, 6) == 0);   // 2 of 5 -> clear
    CHECK(seg.provenance.size() == 5);
  }

  SUBCASE("failing atlases are dropped; all failing is an error") {
    int calls = 0;
    CorrespondenceFn flaky = [&calls](const Image& a, const Image& t) {
      if (calls++ == 0) throw std::runtime_error("no correspondence");
      return identity_correspondence()(a, t);
    };
    const AtlasEntry a2 = square_atlas("a1", side, 20, 18, 8);
    const Segmentation seg = transfer_segmentation_serial(test_img, "t", {atlas, a2}, flaky);
    CHECK(seg.provenance == std::vector<std::string>{"a1"});

    CorrespondenceFn always_fail = [](const Image&, const Image&) -> DisplacementField {
      throw std::runtime_error("nope");
    };
    CHECK_THROWS_AS(transfer_segmentation(test_img, "t", {atlas}, always_fail),
                    ValidationError);
  }
}

TEST_CASE("block matcher recovers a rigid translation approximately") {
  const int side = 96;
  const Image base = testfx::make_blob_image(side, side, 40, 44, 14, 21);
  const int dx = 6, dy = -4;
  Image shifted(side, side, 0.0f);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const int sy = std::clamp(y - dy, 0, side - 1);
      const int sx = std::clamp(x - dx, 0, side - 1);
      shifted.at(y, x) = base.at(sy, sx);
    }
  const DisplacementField field = block_matching_correspondence(base, shifted);
  const DisplacementField serial = block_matching_correspondence_serial(base, shifted);
  CHECK(field.dx == serial.dx);
  CHECK(field.dy == serial.dy);

  // median displacement close to the truth (borders are unreliable)
  std::vector<float> dxs(field.dx), dys(field.dy);
  std::nth_element(dxs.begin(), dxs.begin() + dxs.size() / 2, dxs.end());
  std::nth_element(dys.begin(), dys.begin() + dys.size() / 2, dys.end());
  CHECK(std::abs(dxs[dxs.size() / 2] - dx) <= 2.0f);
  CHECK(std::abs(dys[dys.size() / 2] - dy) <= 2.0f);
}

TEST_CASE("rule features: exact rectangle geometry and scale stability") {
  auto build = [](int scale) {
    const int w = 120 * scale, h = 60 * scale;
    Segmentation seg;
    seg.image_id = "geo";
    seg.lung_left = Mask(w, h);
    seg.lung_right = Mask(w, h);
    seg.heart = Mask(w, h);
    // lungs: two 20x40 rectangles spanning total width 100; heart: 20x20
    for (int y = 0; y < 40 * scale; ++y) {
      for (int x = 0; x < 20 * scale; ++x) seg.lung_left.at(y, x) = 1;
      for (int x = 80 * scale; x < 100 * scale; ++x) seg.lung_right.at(y, x) = 1;
    }
    for (int y = 10 * scale; y < 30 * scale; ++y)
      for (int x = 40 * scale; x < 60 * scale; ++x) seg.heart.at(y, x) = 1;
    return seg;
  };

  const RuleFeatures f1 = compute_rule_features(build(1));
  CHECK(f1.ctr_1d == 0.2);    // 20 / 100 exactly
  CHECK(f1.ctar == 0.25);     // 400 / 1600 exactly
  // hand geometry: heart perimeter 76, lung hulls are the rectangles,
  // perimeter 116 each, disjoint union 232
  CHECK(f1.ctr_2d == doctest::Approx(76.0 / 232.0).epsilon(1e-12));

  // rasters >= 256^2: relative change under 2x scaling stays within 2%
  const RuleFeatures f4 = compute_rule_features(build(4));   // 480x240 raster
  const RuleFeatures f8 = compute_rule_features(build(8));   // 960x480 raster
  CHECK(std::abs(f8.ctr_1d - f4.ctr_1d) / f4.ctr_1d <= 0.02);
  CHECK(std::abs(f8.ctr_2d - f4.ctr_2d) / f4.ctr_2d <= 0.02);
  CHECK(std::abs(f8.ctar - f4.ctar) / f4.ctar <= 0.02);

  SUBCASE("empty mask errors name the mask") {
    Segmentation bad = build(1);
    bad.heart = Mask(bad.lung_left.width, bad.lung_left.height);
    try {
      compute_rule_features(bad);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("heart") != std::string::npos);
    }
  }
}

TEST_CASE("heart covering the lungs' bounding geometry gives the direct area ratio") {
  const int w = 80, h = 80;
  Segmentation seg;
  seg.lung_left = Mask(w, h);
  seg.lung_right = Mask(w, h);
  seg.heart = Mask(w, h);
  for (int y = 10; y < 50; ++y) {
    for (int x = 5; x < 25; ++x) seg.lung_left.at(y, x) = 1;
    for (int x = 55; x < 75; ++x) seg.lung_right.at(y, x) = 1;
  }
  for (int y = 10; y < 50; ++y)
    for (int x = 5; x < 75; ++x) seg.heart.at(y, x) = 1;
  const RuleFeatures f = compute_rule_features(seg);
  const double heart_area = 40.0 * 70.0;
  const double lung_area = 2.0 * 40.0 * 20.0;
  CHECK(f.ctar == doctest::Approx(heart_area / lung_area).epsilon(1e-12));
}

TEST_CASE("convex hull mask fills a convex polygon over the pixel lattice") {
  Mask tri(32, 32);
  tri.at(5, 5) = 1;
  tri.at(5, 25) = 1;
  tri.at(25, 5) = 1;
  const Mask hull = convex_hull_mask(tri);
  CHECK(hull.at(5, 5) == 1);
  CHECK(hull.at(10, 10) == 1);   // inside the triangle
  CHECK(hull.at(24, 24) == 0);   // outside the hypotenuse
  CHECK(hull.area() >= 200);     // roughly 20*20/2
}

TEST_CASE("linear SVM separates, matches hand-placed boundary, stays deterministic") {
  SUBCASE("separable synthetic features reach 100% train accuracy") {
    std::vector<RuleFeatures> features;
    std::vector<int> labels;
    std::mt19937_64 rng(2);
    for (int i = 0; i < 30; ++i) {
      const double jitter = static_cast<double>(rng() % 100) / 2000.0;
      features.push_back({0.60 + jitter, 0.5, 0.30 + jitter});
      labels.push_back(1);
      features.push_back({0.40 - jitter, 0.5, 0.20 - jitter});
      labels.push_back(0);
    }
    const RuleClassifier clf = train_rule_classifier(features, labels);
    int correct = 0;
    for (size_t i = 0; i < features.size(); ++i)
      correct += ((clf.probability(features[i]) >= 0.5) == (labels[i] == 1));
    CHECK(correct == static_cast<int>(features.size()));

    const RuleClassifier again = train_rule_classifier(features, labels);
    CHECK(again.w == clf.w);
    CHECK(again.b == clf.b);
  }

  SUBCASE("hand-placed 4 points put the boundary near the midpoint") {
    const std::vector<RuleFeatures> features = {
        {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {2.0, 0.0, 0.0}, {2.0, 1.0, 0.0}};
    const std::vector<int> labels = {0, 0, 1, 1};
    const RuleClassifier clf = train_rule_classifier(features, labels);
    CHECK(clf.decision({0.5, 0.5, 0.0}) < 0.0);
    CHECK(clf.decision({1.5, 0.5, 0.0}) > 0.0);
    // probabilities are monotone in the decision score
    CHECK(clf.probability({1.5, 0.5, 0.0}) > clf.probability({0.5, 0.5, 0.0}));
    CHECK(clf.probability({0.5, 0.5, 0.0}) >= 0.0);
    CHECK(clf.probability({1.5, 0.5, 0.0}) <= 1.0);
  }

  SUBCASE("single class is rejected") {
    CHECK_THROWS_AS(
        train_rule_classifier({{0.5, 0.5, 0.5}, {0.6, 0.6, 0.6}}, {1, 1}),
        ValidationError);
  }

  SUBCASE("classifier JSON round trip") {
    testfx::TempDir dir("cxr_svm");
    const std::vector<RuleFeatures> features = {
        {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {2.0, 0.0, 0.0}, {2.0, 1.0, 0.0}};
    const RuleClassifier clf = train_rule_classifier(features, {0, 0, 1, 1});
    const std::string path = (dir.path() / "clf.json").string();
    save_rule_classifier_json(clf, path);
    const RuleClassifier back = load_rule_classifier_json(path);
    CHECK(back.w == clf.w);
    CHECK(back.probability(features[2]) == clf.probability(features[2]));
  }
}
