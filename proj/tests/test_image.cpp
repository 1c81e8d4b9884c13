#include <doctest.h>

#include <fstream>

#include "cxr/common.hpp"
#include "cxr/image.hpp"
#include "fixtures.hpp"

using namespace cxr;
using testfx::TempDir;

TEST_CASE("8-bit PGM round trips exactly") {
  TempDir dir("cxr_pgm8");
  const Image img = testfx::make_noise_image(13, 9, 3);
  const std::string path = (dir.path() / "img.pgm").string();
  save_pgm(img, path);
  const Image back = load_pgm(path);
  CHECK(back.width == 13);
  CHECK(back.height == 9);
  CHECK(back.max_value == 255.0f);
  CHECK(back.px == img.px);
}

TEST_CASE("16-bit PGM keeps the wide intensity scale") {
  TempDir dir("cxr_pgm16");
  Image img(6, 4, 0.0f, 4095.0f);
  for (size_t i = 0; i < img.size(); ++i) img.px[i] = static_cast<float>(i * 300 % 4096);
  const std::string path = (dir.path() / "img16.pgm").string();
  save_pgm(img, path);
  const Image back = load_pgm(path);
  CHECK(back.max_value == 65535.0f);
  // values rescale by 65535/4095; spot-check the mapping at both ends
  CHECK(back.px[0] == 0.0f);
  const float expected = std::lround(img.px[5] * 65535.0 / 4095.0);
  CHECK(back.px[5] == expected);
}

TEST_CASE("JSRT raw reader decodes square big-endian 16-bit rasters") {
  TempDir dir("cxr_img");
  const std::string path = (dir.path() / "JPCLN001.IMG").string();
  {
    // 4x4 synthetic raw with values 0, 257, 514, ...
    std::ofstream out(path, std::ios::binary);
    for (int i = 0; i < 16; ++i) {
      const auto v = static_cast<uint16_t>(i * 257);
      const uint8_t hi = static_cast<uint8_t>(v >> 8), lo = static_cast<uint8_t>(v & 0xff);
      out.put(static_cast<char>(hi));
      out.put(static_cast<char>(lo));
    }
  }
  const Image img = load_jsrt_raw(path);
  CHECK(img.width == 4);
  CHECK(img.height == 4);
  CHECK(img.max_value == 4095.0f);
  for (int i = 0; i < 16; ++i) CHECK(img.px[i] == static_cast<float>(i * 257));

  // load_image dispatches on the extension
  const Image via_dispatch = load_image(path);
  CHECK(via_dispatch.px == img.px);

  // non-square byte count is rejected
  const std::string bad = (dir.path() / "bad.img").string();
  {
    std::ofstream out(bad, std::ios::binary);
    for (int i = 0; i < 10; ++i) out.put(0);
  }
  CHECK_THROWS_AS(load_jsrt_raw(bad), IoError);
}

TEST_CASE("bilinear resize: constant stays constant, averages a checkerboard") {
  const Image flat(7, 5, 42.0f);
  const Image up = resize_bilinear(flat, 16, 12);
  for (float v : up.px) CHECK(v == doctest::Approx(42.0f).epsilon(1e-6));

  Image checker(2, 2, 0.0f);
  checker.at(0, 0) = 100.0f;
  checker.at(1, 1) = 100.0f;
  const Image down = resize_bilinear(checker, 1, 1);
  CHECK(down.at(0, 0) == doctest::Approx(50.0f).epsilon(1e-6));

  CHECK_THROWS_AS(resize_bilinear(Image(), 4, 4), ValidationError);
  CHECK_THROWS_AS(resize_bilinear(flat, 0, 4), ValidationError);
}

TEST_CASE("mask save/load binarizes on nonzero pixels") {
  TempDir dir("cxr_mask");
  Mask mask(9, 6);
  for (int x = 2; x < 7; ++x) mask.at(3, x) = 1;
  const std::string path = (dir.path() / "m.pgm").string();
  save_mask(mask, path);
  const Mask back = load_mask(path);
  CHECK(back.px == mask.px);
  CHECK(back.area() == 5);
}

TEST_CASE("png encode/decode through the OpenCV boundary") {
  TempDir dir("cxr_png");
  const Image img = testfx::make_noise_image(20, 14, 8);
  const std::string path = (dir.path() / "img.png").string();
  save_image(img, path);
  const Image back = load_image(path);
  CHECK(back.width == 20);
  CHECK(back.height == 14);
  CHECK(back.px == img.px);  // 8-bit integers survive the round trip

  CHECK_THROWS_AS(load_image((dir.path() / "missing.png").string()), IoError);
}
