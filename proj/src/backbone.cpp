#include "cxr/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <unordered_map>

#include <omp.h>

#include "cxr/common.hpp"
#include "cxr/external_scorer.hpp"
#include "cxr/feature_store.hpp"

namespace fs = std::filesystem;

namespace cxr {

std::string to_string(Family f) {
  switch (f) {
    case Family::alexnet: return "alexnet";
    case Family::vgg16: return "vgg16";
    case Family::vgg19: return "vgg19";
    case Family::resnet50: return "resnet50";
    case Family::resnet101: return "resnet101";
    case Family::resnet152: return "resnet152";
    case Family::standin: return "standin";
  }
  return "?";
}

std::string to_string(Preprocessing p) {
  return p == Preprocessing::mean_subtract ? "mean_subtract" : "scale_unit";
}

Family family_from_string(const std::string& s) {
  for (Family f : {Family::alexnet, Family::vgg16, Family::vgg19, Family::resnet50,
                   Family::resnet101, Family::resnet152, Family::standin})
    if (to_string(f) == s) return f;
  throw ValidationError("unknown backbone family: " + s);
}

Preprocessing preprocessing_from_string(const std::string& s) {
  if (s == "mean_subtract") return Preprocessing::mean_subtract;
  if (s == "scale_unit") return Preprocessing::scale_unit;
  throw ValidationError("unknown preprocessing: " + s);
}

namespace {

std::vector<LayerInfo> resnet_candidates(const std::string& block) {
  return {{block + "_branch2c", "4th", "Convolution"},
          {block + "_branch2cx", "4th", "Batch Normalization"},
          {block, "4th", "Residual Connection"},
          {block + "x", "4th", "ReLU"},
          {"res5c_branch2c", "5th", "Convolution"},
          {"res5c_branch2cx", "5th", "Batch Normalization"},
          {"res5c", "5th", "Residual Connection"},
          {"res5cx", "5th", "ReLU"},
          {"pool5", "Final", "Average Pooling"}};
}

std::vector<LayerInfo> fc_candidates() {
  return {{"pool5", "Final", "Max Pooling"},
          {"fc6", "FC", "First Fully Connected"},
          {"fc7", "FC", "Second Fully Connected"}};
}

}  // namespace

const std::vector<LayerInfo>& list_candidate_layers(Family family) {
  static const std::vector<LayerInfo> alexnet = fc_candidates();
  static const std::vector<LayerInfo> vgg16 = fc_candidates();
  static const std::vector<LayerInfo> vgg19 = fc_candidates();
  static const std::vector<LayerInfo> r50 = resnet_candidates("res4f");
  static const std::vector<LayerInfo> r101 = resnet_candidates("res4b22");
  static const std::vector<LayerInfo> r152 = resnet_candidates("res4b35");
  static const std::vector<LayerInfo> standin = {
      {"conv1", "1st", "Convolution"},     {"relu1", "1st", "ReLU"},
      {"pool1", "1st", "Average Pooling"}, {"conv2", "2nd", "Convolution"},
      {"relu2", "2nd", "ReLU"},            {"pool2", "2nd", "Average Pooling"},
      {"conv3", "3rd", "Convolution"},     {"relu3", "3rd", "ReLU"},
      {"pool3", "3rd", "Average Pooling"}, {"gap", "Final", "Global Average Pooling"}};
  switch (family) {
    case Family::alexnet: return alexnet;
    case Family::vgg16: return vgg16;
    case Family::vgg19: return vgg19;
    case Family::resnet50: return r50;
    case Family::resnet101: return r101;
    case Family::resnet152: return r152;
    case Family::standin: return standin;
  }
  throw ValidationError("unknown backbone family");
}

std::string default_tap_layer(Family family) {
  switch (family) {
    case Family::alexnet:
    case Family::vgg16:
    case Family::vgg19: return "fc7";  // second fully connected
    case Family::resnet50: return "res4f";
    case Family::resnet101: return "res4b22";
    case Family::resnet152: return "res4b35";
    case Family::standin: return "pool3";
  }
  throw ValidationError("unknown backbone family");
}

int default_input_side(Family family) {
  switch (family) {
    case Family::alexnet: return 227;
    case Family::standin: return 64;
    default: return 224;
  }
}

BackboneSpec BackboneSpec::resolved() const {
  BackboneSpec r = *this;
  if (r.tap_layer.empty()) r.tap_layer = default_tap_layer(r.family);
  if (r.input_side <= 0) r.input_side = default_input_side(r.family);
  const auto& layers = list_candidate_layers(r.family);
  bool known = std::any_of(layers.begin(), layers.end(),
                           [&r](const LayerInfo& l) { return l.name == r.tap_layer; });
  if (!known) {
    std::vector<std::string> names;
    for (const auto& l : layers) names.push_back(l.name);
    throw ValidationError("tap layer \"" + r.tap_layer + "\" not in " + to_string(r.family) +
                          " layer list; valid: " + join(names, ", "));
  }
  return r;
}

std::string BackboneSpec::cache_key() const {
  BackboneSpec r = resolved();
  return to_string(r.family) + "_" + r.tap_layer + "_" + std::to_string(r.input_side) + "_" +
         to_string(r.preprocessing);
}

Tensor3 preprocess_image(const Image& img, const BackboneSpec& spec) {
  if (img.empty()) throw ValidationError("preprocess_image: zero-sized image");
  const BackboneSpec r = spec.resolved();
  Image resized = (img.width == r.input_side && img.height == r.input_side)
                      ? img
                      : resize_bilinear(img, r.input_side, r.input_side);
  if (r.preprocessing == Preprocessing::scale_unit) {
    const float scale = 1.0f / resized.max_value;
    for (auto& v : resized.px) v *= scale;
  } else {
    double sum = 0.0;
    for (float v : resized.px) sum += v;
    const auto mean = static_cast<float>(sum / static_cast<double>(resized.size()));
    for (auto& v : resized.px) v -= mean;
  }
  Tensor3 out(r.input_side, r.input_side, 3);
  for (int y = 0; y < r.input_side; ++y)
    for (int x = 0; x < r.input_side; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = resized.at(y, x);
  return out;
}

Tensor3 preprocess_record(const ImageRecord& record, const BackboneSpec& spec) {
  return preprocess_image(load_image(record.path), spec);
}

namespace {

// Platform-stable uniform in [-s, s); std::normal_distribution's draw
// sequence is implementation-defined, so weights are generated from raw bits.
float uniform_weight(std::mt19937_64& rng, double scale) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return static_cast<float>((2.0 * u - 1.0) * scale);
}

Tensor3 conv3x3(const Tensor3& in, const std::vector<float>& w, const std::vector<float>& b,
                int out_ch) {
  const int in_ch = in.channels;
  Tensor3 out(in.height, in.width, out_ch);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int oc = 0; oc < out_ch; ++oc) {
        double acc = b[oc];
        for (int ic = 0; ic < in_ch; ++ic)
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= in.height) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= in.width) continue;
              const size_t wi =
                  ((static_cast<size_t>(oc) * in_ch + ic) * 3 + (dy + 1)) * 3 + (dx + 1);
              acc += static_cast<double>(in.at(yy, xx, ic)) * w[wi];
            }
          }
        out.at(y, x, oc) = static_cast<float>(acc);
      }
  return out;
}

Tensor3 relu(Tensor3 t) {
  for (auto& v : t.data) v = std::max(v, 0.0f);
  return t;
}

Tensor3 avgpool2(const Tensor3& in) {
  Tensor3 out(in.height / 2, in.width / 2, in.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < in.channels; ++c)
        out.at(y, x, c) = (in.at(2 * y, 2 * x, c) + in.at(2 * y, 2 * x + 1, c) +
                           in.at(2 * y + 1, 2 * x, c) + in.at(2 * y + 1, 2 * x + 1, c)) /
                          4.0f;
  return out;
}

std::vector<float> flatten(const Tensor3& t) { return t.data; }

}  // namespace

StandInBackbone::StandInBackbone(uint64_t seed) : seed_(seed) {
  std::mt19937_64 rng(seed);
  auto init = [&rng](Conv& c, int in_ch, int out_ch) {
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    const double scale = std::sqrt(3.0 / (9.0 * in_ch));
    c.w.resize(static_cast<size_t>(out_ch) * in_ch * 9);
    for (auto& v : c.w) v = uniform_weight(rng, scale);
    c.b.resize(out_ch);
    for (auto& v : c.b) v = uniform_weight(rng, 0.01);
  };
  init(conv1_, 3, 8);
  init(conv2_, 8, 16);
  init(conv3_, 16, 16);
}

std::vector<float> StandInBackbone::forward_tap(const Tensor3& input,
                                                const std::string& tap_layer) const {
  Tensor3 t = conv3x3(input, conv1_.w, conv1_.b, conv1_.out_ch);
  if (tap_layer == "conv1") return flatten(t);
  t = relu(std::move(t));
  if (tap_layer == "relu1") return flatten(t);
  t = avgpool2(t);
  if (tap_layer == "pool1") return flatten(t);

  t = conv3x3(t, conv2_.w, conv2_.b, conv2_.out_ch);
  if (tap_layer == "conv2") return flatten(t);
  t = relu(std::move(t));
  if (tap_layer == "relu2") return flatten(t);
  t = avgpool2(t);
  if (tap_layer == "pool2") return flatten(t);

  t = conv3x3(t, conv3_.w, conv3_.b, conv3_.out_ch);
  if (tap_layer == "conv3") return flatten(t);
  t = relu(std::move(t));
  if (tap_layer == "relu3") return flatten(t);
  t = avgpool2(t);
  if (tap_layer == "pool3") return flatten(t);

  if (tap_layer == "gap") {
    std::vector<float> out(t.channels, 0.0f);
    const auto n = static_cast<double>(t.height) * t.width;
    for (int c = 0; c < t.channels; ++c) {
      double acc = 0.0;
      for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x) acc += t.at(y, x, c);
      out[c] = static_cast<float>(acc / n);
    }
    return out;
  }
  throw ValidationError("tap layer \"" + tap_layer + "\" not in standin layer list");
}

FeatureVector StandInBackbone::extract(const Image& img, const BackboneSpec& spec,
                                       const std::string& image_id) const {
  const BackboneSpec r = spec.resolved();
  FeatureVector fv;
  fv.image_id = image_id;
  fv.values = forward_tap(preprocess_image(img, r), r.tap_layer);
  for (float v : fv.values)
    if (!std::isfinite(v)) throw NumericalError("non-finite feature value for " + image_id);
  return fv;
}

uint64_t StandInBackbone::weights_checksum() const {
  uint64_t h = 14695981039346656037ull;
  for (const Conv* c : {&conv1_, &conv2_, &conv3_}) {
    h = fnv1a64(c->w.data(), c->w.size() * sizeof(float), h);
    h = fnv1a64(c->b.data(), c->b.size() * sizeof(float), h);
  }
  return h;
}

WeightsSource WeightsSource::parse(const std::string& locator, Family family) {
  WeightsSource ws;
  if (locator.rfind("standin:", 0) == 0) {
    if (family != Family::standin)
      throw ValidationError("weights source \"" + locator + "\" only valid for family standin");
    ws.kind = Kind::standin;
    try {
      ws.seed = std::stoull(locator.substr(8));
    } catch (const std::exception&) {
      throw ValidationError("bad stand-in seed in weights source: " + locator);
    }
    return ws;
  }
  if (locator.rfind("store:", 0) == 0) {
    ws.kind = Kind::store;
    ws.argument = locator.substr(6);
    if (!fs::exists(ws.argument))
      throw ValidationError("missing weights: feature store not found: " + ws.argument);
    return ws;
  }
  if (locator.rfind("exec:", 0) == 0) {
    ws.kind = Kind::exec;
    ws.argument = locator.substr(5);
    if (ws.argument.empty()) throw ValidationError("empty exec weights source");
    return ws;
  }
  if (family == Family::standin && locator.empty()) {
    ws.kind = Kind::standin;
    return ws;
  }
  throw ValidationError("missing weights: cannot resolve weights source \"" + locator +
                        "\" for family " + to_string(family) +
                        " (expected standin:<seed>, store:<path> or exec:<command>)");
}

namespace {

std::vector<FeatureVector> extract_impl(const std::vector<ImageRecord>& records,
                                        const BackboneSpec& spec,
                                        const std::string& weights_source, bool parallel) {
  const BackboneSpec r = spec.resolved();
  const WeightsSource ws = WeightsSource::parse(weights_source, r.family);
  std::vector<FeatureVector> out(records.size());

  switch (ws.kind) {
    case WeightsSource::Kind::standin: {
      StandInBackbone net(ws.seed);
      if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (size_t i = 0; i < records.size(); ++i)
          out[i] = net.extract(load_image(records[i].path), r, records[i].id);
      } else {
        for (size_t i = 0; i < records.size(); ++i)
          out[i] = net.extract(load_image(records[i].path), r, records[i].id);
      }
      break;
    }
    case WeightsSource::Kind::store: {
      auto stored = load_feature_store(ws.argument);
      std::unordered_map<std::string, const FeatureVector*> by_id;
      for (const auto& fv : stored) by_id[fv.image_id] = &fv;
      for (size_t i = 0; i < records.size(); ++i) {
        auto it = by_id.find(records[i].id);
        if (it == by_id.end())
          throw ValidationError("feature store " + ws.argument + " has no entry for image " +
                                records[i].id);
        out[i] = *it->second;
      }
      break;
    }
    case WeightsSource::Kind::exec: {
      ExternalFeatureExtractor child(ws.argument);
      for (size_t i = 0; i < records.size(); ++i) {
        out[i].image_id = records[i].id;
        out[i].values = child.extract(records[i].path, r.tap_layer);
      }
      break;
    }
  }

  for (size_t i = 1; i < out.size(); ++i)
    if (out[i].dim() != out[0].dim())
      throw ValidationError("feature dimension mismatch: " + out[i].image_id + " has dim " +
                            std::to_string(out[i].dim()) + ", expected " +
                            std::to_string(out[0].dim()));
  return out;
}

}  // namespace

std::vector<FeatureVector> extract_features(const std::vector<ImageRecord>& records,
                                            const BackboneSpec& spec,
                                            const std::string& weights_source) {
  return extract_impl(records, spec, weights_source, true);
}

std::vector<FeatureVector> extract_features_serial(const std::vector<ImageRecord>& records,
                                                   const BackboneSpec& spec,
                                                   const std::string& weights_source) {
  return extract_impl(records, spec, weights_source, false);
}

std::vector<FeatureVector> extract_features_cached(const std::vector<ImageRecord>& records,
                                                   const BackboneSpec& spec,
                                                   const std::string& weights_source,
                                                   const std::string& cache_dir) {
  const BackboneSpec r = spec.resolved();
  const WeightsSource ws = WeightsSource::parse(weights_source, r.family);
  uint64_t checksum = 0;
  switch (ws.kind) {
    case WeightsSource::Kind::standin: checksum = StandInBackbone(ws.seed).weights_checksum(); break;
    case WeightsSource::Kind::store: checksum = hash_file(ws.argument); break;
    case WeightsSource::Kind::exec: checksum = fnv1a64(ws.argument); break;
  }
  fs::create_directories(cache_dir);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(checksum));
  const fs::path cache_file = fs::path(cache_dir) / (r.cache_key() + "_" + buf + ".csv");

  std::unordered_map<std::string, FeatureVector> cached;
  if (fs::exists(cache_file))
    for (auto& fv : load_feature_store(cache_file.string())) cached.emplace(fv.image_id, std::move(fv));

  std::vector<ImageRecord> missing;
  for (const auto& rec : records)
    if (!cached.count(rec.id)) missing.push_back(rec);

  if (!missing.empty()) {
    auto fresh = extract_features(missing, r, weights_source);
    for (auto& fv : fresh) cached.emplace(fv.image_id, std::move(fv));
    std::vector<FeatureVector> all;
    all.reserve(cached.size());
    for (const auto& [id, fv] : std::map<std::string, FeatureVector>(cached.begin(), cached.end()))
      all.push_back(fv);
    save_feature_store(cache_file.string(), r, all);
  }

  std::vector<FeatureVector> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(cached.at(rec.id));
  return out;
}

}  // namespace cxr
