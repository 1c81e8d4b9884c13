#include "cxr/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cxr/common.hpp"

namespace cxr {

namespace {

std::string extension_lower(const std::string& path) {
  size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  return to_lower(path.substr(dot));
}

}  // namespace

long Mask::area() const {
  long n = 0;
  for (uint8_t v : px) n += (v != 0);
  return n;
}

Image resize_bilinear(const Image& in, int out_w, int out_h) {
  if (in.empty()) throw ValidationError("resize_bilinear: empty input image");
  if (out_w <= 0 || out_h <= 0) throw ValidationError("resize_bilinear: non-positive output size");
  Image out(out_w, out_h, 0.0f, in.max_value);
  const double sx = static_cast<double>(in.width) / out_w;
  const double sy = static_cast<double>(in.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y1 = std::min(y0 + 1, in.height - 1);
    y0 = std::clamp(y0, 0, in.height - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x1 = std::min(x0 + 1, in.width - 1);
      x0 = std::clamp(x0, 0, in.width - 1);
      double top = in.at(y0, x0) * (1.0 - wx) + in.at(y0, x1) * wx;
      double bot = in.at(y1, x0) * (1.0 - wx) + in.at(y1, x1) * wx;
      out.at(oy, ox) = static_cast<float>(top * (1.0 - wy) + bot * wy);
    }
  }
  return out;
}

Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw IoError("not a PGM file: " + path);
  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw IoError("truncated PGM header: " + path);
  };
  int w = std::stoi(next_token());
  int h = std::stoi(next_token());
  int maxv = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxv <= 0) throw IoError("bad PGM header: " + path);
  Image img(w, h, 0.0f, static_cast<float>(maxv));
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    const size_t n = img.size();
    if (maxv < 256) {
      std::vector<uint8_t> buf(n);
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
      if (!in) throw IoError("truncated PGM data: " + path);
      for (size_t i = 0; i < n; ++i) img.px[i] = buf[i];
    } else {
      std::vector<uint8_t> buf(n * 2);
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
      if (!in) throw IoError("truncated PGM data: " + path);
      for (size_t i = 0; i < n; ++i)
        img.px[i] = static_cast<float>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
  } else {
    for (size_t i = 0; i < img.size(); ++i) {
      int v;
      if (!(in >> v)) throw IoError("truncated PGM data: " + path);
      img.px[i] = static_cast<float>(v);
    }
  }
  return img;
}

void save_pgm(const Image& img, const std::string& path) {
  if (img.empty()) throw ValidationError("save_pgm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  const int maxv = img.max_value > 255.0f ? 65535 : 255;
  out << "P5\n" << img.width << " " << img.height << "\n" << maxv << "\n";
  const double scale = maxv / static_cast<double>(img.max_value);
  if (maxv < 256) {
    std::vector<uint8_t> buf(img.size());
    for (size_t i = 0; i < img.size(); ++i) {
      double v = std::clamp(img.px[i] * scale, 0.0, 255.0);
      buf[i] = static_cast<uint8_t>(std::lround(v));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  } else {
    std::vector<uint8_t> buf(img.size() * 2);
    for (size_t i = 0; i < img.size(); ++i) {
      double v = std::clamp(img.px[i] * scale, 0.0, 65535.0);
      auto u = static_cast<uint16_t>(std::lround(v));
      buf[2 * i] = static_cast<uint8_t>(u >> 8);
      buf[2 * i + 1] = static_cast<uint8_t>(u & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

Image load_jsrt_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<long long>(in.tellg());
  in.seekg(0);
  const long long expected = 2048LL * 2048LL * 2;
  int side = 2048;
  if (bytes != expected) {
    // Accept any square 16-bit raster so downsampled fixtures can be read.
    long long pixels = bytes / 2;
    auto root = static_cast<long long>(std::llround(std::sqrt(static_cast<double>(pixels))));
    if (bytes % 2 != 0 || root * root != pixels || root <= 0)
      throw IoError("not a square 16-bit raw image: " + path);
    side = static_cast<int>(root);
  }
  Image img(side, side, 0.0f, 4095.0f);
  std::vector<uint8_t> buf(static_cast<size_t>(bytes));
  in.read(reinterpret_cast<char*>(buf.data()), bytes);
  if (!in) throw IoError("truncated raw image: " + path);
  for (size_t i = 0; i < img.size(); ++i)
    img.px[i] = static_cast<float>((buf[2 * i] << 8) | buf[2 * i + 1]);
  return img;
}

Image load_image(const std::string& path) {
  const std::string ext = extension_lower(path);
  if (ext == ".pgm") return load_pgm(path);
  if (ext == ".img") return load_jsrt_raw(path);
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH);
  if (m.empty()) throw IoError("cannot decode image: " + path);
  Image img(m.cols, m.rows, 0.0f, m.depth() == CV_16U ? 65535.0f : 255.0f);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      img.at(y, x) = m.depth() == CV_16U ? static_cast<float>(m.at<uint16_t>(y, x))
                                         : static_cast<float>(m.at<uint8_t>(y, x));
  return img;
}

void save_image(const Image& img, const std::string& path) {
  const std::string ext = extension_lower(path);
  if (ext == ".pgm") {
    save_pgm(img, path);
    return;
  }
  cv::Mat m(img.height, img.width, CV_8U);
  const double scale = 255.0 / img.max_value;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      m.at<uint8_t>(y, x) =
          static_cast<uint8_t>(std::lround(std::clamp(img.at(y, x) * scale, 0.0, 255.0)));
  if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

void save_rgb(const std::vector<uint8_t>& rgb, int width, int height, const std::string& path) {
  if (rgb.size() != static_cast<size_t>(width) * height * 3)
    throw ValidationError("save_rgb: buffer size does not match dimensions");
  const std::string ext = extension_lower(path);
  if (ext == ".ppm") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path);
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw IoError("write failed: " + path);
    return;
  }
  cv::Mat m(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const size_t i = (static_cast<size_t>(y) * width + x) * 3;
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(rgb[i + 2], rgb[i + 1], rgb[i]);  // BGR
    }
  if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

Mask load_mask(const std::string& path) {
  Image img = load_image(path);
  Mask mask(img.width, img.height);
  for (size_t i = 0; i < img.size(); ++i) mask.px[i] = img.px[i] > 0.0f ? 1 : 0;
  return mask;
}

void save_mask(const Mask& mask, const std::string& path) {
  Image img(mask.width, mask.height, 0.0f, 255.0f);
  for (size_t i = 0; i < img.size(); ++i) img.px[i] = mask.px[i] ? 255.0f : 0.0f;
  save_image(img, path);
}

}  // namespace cxr
