#include "cxr/heads.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "cxr/common.hpp"

using nlohmann::json;

namespace cxr {

std::array<double, 2> TrainedHead::probabilities(const std::vector<float>& features) const {
  if (static_cast<int>(features.size()) != dim)
    throw ValidationError("feature dim " + std::to_string(features.size()) +
                          " does not match head dim " + std::to_string(dim));
  double logits[2];
  for (int c = 0; c < 2; ++c) {
    double acc = bias[c];
    const float* w = weights.data() + static_cast<size_t>(c) * dim;
    for (int d = 0; d < dim; ++d) acc += static_cast<double>(w[d]) * features[d];
    logits[c] = acc;
  }
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

namespace {

float stable_uniform(std::mt19937_64& rng, double scale) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return static_cast<float>((2.0 * u - 1.0) * scale);
}

// Mean cross-entropy of the current head over all samples, no dropout.
double full_loss(const TrainedHead& head, const std::vector<FeatureVector>& features,
                 const std::vector<int>& labels) {
  double loss = 0.0;
  for (size_t i = 0; i < features.size(); ++i) {
    auto p = head.probabilities(features[i].values);
    loss += -std::log(std::max(p[labels[i] == 1 ? 1 : 0], 1e-300));
  }
  return loss / static_cast<double>(features.size());
}

}  // namespace

TrainedHead train_head(const std::vector<FeatureVector>& features, const std::vector<int>& labels,
                       const HeadConfig& config, const BackboneSpec& backbone) {
  if (features.empty()) throw ValidationError("train_head: no training samples");
  if (features.size() != labels.size())
    throw ValidationError("train_head: features/labels length mismatch");
  if (config.learning_rate <= 0.0) throw ValidationError("train_head: learning_rate must be > 0");
  if (config.dropout_p < 0.0 || config.dropout_p >= 1.0)
    throw ValidationError("train_head: dropout_p must be in [0,1)");
  if (config.epochs <= 0 || config.batch_size <= 0)
    throw ValidationError("train_head: epochs and batch_size must be positive");

  const int dim = features[0].dim();
  long pos = 0, neg = 0;
  for (size_t i = 0; i < features.size(); ++i) {
    if (features[i].dim() != dim)
      throw ValidationError("train_head: feature dim mismatch at " + features[i].image_id);
    labels[i] == 1 ? ++pos : ++neg;
  }
  if (pos == 0 || neg == 0)
    throw ValidationError("train_head: both classes required (positives=" + std::to_string(pos) +
                          ", negatives=" + std::to_string(neg) + ")");

  TrainedHead head;
  head.dim = dim;
  head.config = config;
  head.backbone = backbone;
  head.weights.assign(static_cast<size_t>(2) * dim, 0.0f);
  std::mt19937_64 rng(config.seed);
  for (auto& w : head.weights) w = stable_uniform(rng, 0.01);
  head.bias = {0.0f, 0.0f};

  head.stats.initial_loss = full_loss(head, features, labels);

  const size_t n = features.size();
  const double keep = 1.0 - config.dropout_p;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  // Adam state
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const size_t n_params = head.weights.size() + 2;
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
  long step = 0;

  std::vector<float> dropped;          // batch feature buffer with dropout applied
  std::vector<std::array<double, 2>> delta;  // softmax - onehot per batch sample

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    deterministic_shuffle(order, rng);
    for (size_t start = 0; start < n; start += config.batch_size) {
      const size_t bsz = std::min(static_cast<size_t>(config.batch_size), n - start);
      dropped.assign(bsz * static_cast<size_t>(dim), 0.0f);
      delta.assign(bsz, {0.0, 0.0});

      for (size_t b = 0; b < bsz; ++b) {
        const auto& x = features[order[start + b]].values;
        float* xd = dropped.data() + b * static_cast<size_t>(dim);
        if (config.dropout_p > 0.0) {
          for (int d = 0; d < dim; ++d) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            xd[d] = u < keep ? static_cast<float>(x[d] / keep) : 0.0f;
          }
        } else {
          std::copy(x.begin(), x.end(), xd);
        }
      }

      int numeric_failure = 0;
#pragma omp parallel for schedule(static) reduction(| : numeric_failure)
      for (size_t b = 0; b < bsz; ++b) {
        const float* xd = dropped.data() + b * static_cast<size_t>(dim);
        double logits[2];
        for (int c = 0; c < 2; ++c) {
          double acc = head.bias[c];
          const float* w = head.weights.data() + static_cast<size_t>(c) * dim;
          for (int d = 0; d < dim; ++d) acc += static_cast<double>(w[d]) * xd[d];
          logits[c] = acc;
        }
        if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) {
          numeric_failure = 1;
          continue;
        }
        const double mx = std::max(logits[0], logits[1]);
        const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
        const double z = e0 + e1;
        const int y = labels[order[start + b]] == 1 ? 1 : 0;
        delta[b][0] = e0 / z - (y == 0 ? 1.0 : 0.0);
        delta[b][1] = e1 / z - (y == 1 ? 1.0 : 0.0);
      }
      if (numeric_failure)
        throw NumericalError("train_head: non-finite loss at epoch " + std::to_string(epoch));

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      const double inv_b = 1.0 / static_cast<double>(bsz);

      // Gradient per weight accumulates over the batch in index order, so the
      // result is identical no matter how the d-loop is scheduled.
#pragma omp parallel for schedule(static)
      for (int d = 0; d < dim; ++d) {
        for (int c = 0; c < 2; ++c) {
          double g = 0.0;
          for (size_t b = 0; b < bsz; ++b)
            g += delta[b][c] * dropped[b * static_cast<size_t>(dim) + d];
          g *= inv_b;
          const size_t pi = static_cast<size_t>(c) * dim + d;
          m[pi] = beta1 * m[pi] + (1.0 - beta1) * g;
          v[pi] = beta2 * v[pi] + (1.0 - beta2) * g * g;
          const double mhat = m[pi] / bc1, vhat = v[pi] / bc2;
          head.weights[pi] -=
              static_cast<float>(config.learning_rate * mhat / (std::sqrt(vhat) + eps));
        }
      }
      for (int c = 0; c < 2; ++c) {
        double g = 0.0;
        for (size_t b = 0; b < bsz; ++b) g += delta[b][c];
        g *= inv_b;
        const size_t pi = head.weights.size() + c;
        m[pi] = beta1 * m[pi] + (1.0 - beta1) * g;
        v[pi] = beta2 * v[pi] + (1.0 - beta2) * g * g;
        const double mhat = m[pi] / bc1, vhat = v[pi] / bc2;
        head.bias[c] -=
            static_cast<float>(config.learning_rate * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

  for (float w : head.weights)
    if (!std::isfinite(w)) throw NumericalError("train_head: non-finite weight after training");
  head.stats.final_loss = full_loss(head, features, labels);
  return head;
}

std::vector<ProbabilityRecord> predict_proba(const TrainedHead& head,
                                             const std::vector<FeatureVector>& features,
                                             const std::vector<int>& labels,
                                             const std::string& model_id) {
  if (features.size() != labels.size())
    throw ValidationError("predict_proba: features/labels length mismatch");
  for (const auto& fv : features)  // validate before the parallel region
    if (fv.dim() != head.dim)
      throw ValidationError("feature dim " + std::to_string(fv.dim()) +
                            " does not match head dim " + std::to_string(head.dim) + " at " +
                            fv.image_id);
  std::vector<ProbabilityRecord> out(features.size());
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < features.size(); ++i) {
    const auto p = head.probabilities(features[i].values);
    out[i] = {features[i].image_id, model_id, p[1], labels[i] == 1 ? 1 : 0};
  }
  return out;
}

FeatureVector fuse_features(const FeatureVector& dcn, const RuleFeatures& rule,
                            const std::string& rule_image_id) {
  if (dcn.image_id != rule_image_id)
    throw ValidationError("fuse_features: image id mismatch (" + dcn.image_id + " vs " +
                          rule_image_id + ")");
  FeatureVector out = dcn;
  out.values.push_back(static_cast<float>(rule.ctr_1d));
  out.values.push_back(static_cast<float>(rule.ctr_2d));
  out.values.push_back(static_cast<float>(rule.ctar));
  return out;
}

void save_head_json(const TrainedHead& head, const std::string& path) {
  const BackboneSpec b = head.backbone;
  json doc = {{"dim", head.dim},
              {"weights", head.weights},
              {"bias", std::vector<float>(head.bias.begin(), head.bias.end())},
              {"config",
               {{"learning_rate", head.config.learning_rate},
                {"dropout_p", head.config.dropout_p},
                {"epochs", head.config.epochs},
                {"batch_size", head.config.batch_size},
                {"seed", head.config.seed},
                {"optimizer", "adam"}}},
              {"backbone",
               {{"family", to_string(b.family)},
                {"tap_layer", b.tap_layer},
                {"input_side", b.input_side},
                {"preprocessing", to_string(b.preprocessing)}}},
              {"split_ref", head.split_ref},
              {"stats",
               {{"initial_loss", head.stats.initial_loss},
                {"final_loss", head.stats.final_loss}}}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write head: " + path);
  out << doc.dump(2) << "\n";
}

TrainedHead load_head_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open head: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("malformed head JSON " + path + ": " + e.what());
  }
  TrainedHead head;
  head.dim = doc.at("dim").get<int>();
  head.weights = doc.at("weights").get<std::vector<float>>();
  auto bias = doc.at("bias").get<std::vector<float>>();
  if (bias.size() != 2 || head.weights.size() != static_cast<size_t>(2) * head.dim)
    throw ValidationError("head weight shapes do not match dim in " + path);
  head.bias = {bias[0], bias[1]};
  const auto& cfg = doc.at("config");
  head.config.learning_rate = cfg.at("learning_rate").get<double>();
  head.config.dropout_p = cfg.at("dropout_p").get<double>();
  head.config.epochs = cfg.at("epochs").get<int>();
  head.config.batch_size = cfg.at("batch_size").get<int>();
  head.config.seed = cfg.at("seed").get<uint64_t>();
  const auto& bb = doc.at("backbone");
  head.backbone.family = family_from_string(bb.at("family").get<std::string>());
  head.backbone.tap_layer = bb.at("tap_layer").get<std::string>();
  head.backbone.input_side = bb.at("input_side").get<int>();
  head.backbone.preprocessing =
      preprocessing_from_string(bb.at("preprocessing").get<std::string>());
  head.split_ref = doc.value("split_ref", "");
  if (doc.contains("stats")) {
    head.stats.initial_loss = doc["stats"].value("initial_loss", 0.0);
    head.stats.final_loss = doc["stats"].value("final_loss", 0.0);
  }
  return head;
}

}  // namespace cxr
