#include "cxr/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cxr/common.hpp"

using nlohmann::json;

namespace cxr {

namespace {

std::array<double, 3> standardize(const RuleFeatures& f, const std::array<double, 3>& mean,
                                  const std::array<double, 3>& scale) {
  return {(f.ctr_1d - mean[0]) / scale[0], (f.ctr_2d - mean[1]) / scale[1],
          (f.ctar - mean[2]) / scale[2]};
}

// Platt scaling with the standard smoothed targets; fixed-iteration Newton
// with a gradient fallback, fully deterministic.
std::pair<double, double> fit_platt(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
  long n_pos = 0, n_neg = 0;
  for (int y : labels) y == 1 ? ++n_pos : ++n_neg;
  const double t_pos = (static_cast<double>(n_pos) + 1.0) / (static_cast<double>(n_pos) + 2.0);
  const double t_neg = 1.0 / (static_cast<double>(n_neg) + 2.0);

  double a = -1.0;
  double b = std::log((static_cast<double>(n_neg) + 1.0) / (static_cast<double>(n_pos) + 1.0));
  for (int it = 0; it < 200; ++it) {
    double g_a = 0.0, g_b = 0.0, h_aa = 1e-12, h_ab = 0.0, h_bb = 1e-12;
    for (size_t i = 0; i < scores.size(); ++i) {
      const double t = labels[i] == 1 ? t_pos : t_neg;
      const double z = a * scores[i] + b;
      const double p = 1.0 / (1.0 + std::exp(z));  // P(y=1)
      const double dz = t - p;                     // dLoss/dz for the log loss
      g_a += dz * scores[i];
      g_b += dz;
      const double w = p * (1.0 - p);
      h_aa += w * scores[i] * scores[i];
      h_ab += w * scores[i];
      h_bb += w;
    }
    const double det = h_aa * h_bb - h_ab * h_ab;
    double step_a, step_b;
    if (std::abs(det) > 1e-18) {
      step_a = (h_bb * g_a - h_ab * g_b) / det;
      step_b = (h_aa * g_b - h_ab * g_a) / det;
    } else {
      step_a = g_a * 1e-3;
      step_b = g_b * 1e-3;
    }
    a -= step_a;
    b -= step_b;
    if (std::abs(step_a) < 1e-12 && std::abs(step_b) < 1e-12) break;
  }
  return {a, b};
}

}  // namespace

double RuleClassifier::decision(const RuleFeatures& f) const {
  const auto z = standardize(f, feat_mean, feat_scale);
  return w[0] * z[0] + w[1] * z[1] + w[2] * z[2] + b;
}

double RuleClassifier::probability(const RuleFeatures& f) const {
  const double z = platt_a * decision(f) + platt_b;
  return 1.0 / (1.0 + std::exp(z));
}

RuleClassifier train_rule_classifier(const std::vector<RuleFeatures>& features,
                                     const std::vector<int>& labels, const SvmConfig& config) {
  if (features.empty()) throw ValidationError("train_rule_classifier: no samples");
  if (features.size() != labels.size())
    throw ValidationError("train_rule_classifier: features/labels length mismatch");
  long n_pos = 0, n_neg = 0;
  for (int y : labels) y == 1 ? ++n_pos : ++n_neg;
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError("train_rule_classifier: both classes required");

  RuleClassifier clf;
  clf.config = config;
  const size_t n = features.size();

  auto raw = [&features](size_t i) {
    return std::array<double, 3>{features[i].ctr_1d, features[i].ctr_2d, features[i].ctar};
  };
  for (int d = 0; d < 3; ++d) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += raw(i)[d];
    clf.feat_mean[d] = sum / static_cast<double>(n);
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double dv = raw(i)[d] - clf.feat_mean[d];
      ss += dv * dv;
    }
    clf.feat_scale[d] = std::sqrt(ss / static_cast<double>(n));
    if (clf.feat_scale[d] < 1e-12) clf.feat_scale[d] = 1.0;  // constant feature
  }

  std::vector<std::array<double, 3>> z(n);
  std::vector<double> y(n);
  for (size_t i = 0; i < n; ++i) {
    z[i] = standardize(features[i], clf.feat_mean, clf.feat_scale);
    y[i] = labels[i] == 1 ? 1.0 : -1.0;
  }

  // Full-batch subgradient descent on the L2-regularized hinge loss.
  const double lambda = config.lambda;
  for (int t = 1; t <= config.iterations; ++t) {
    const double eta = 1.0 / (lambda * static_cast<double>(t));
    double g[3] = {lambda * clf.w[0], lambda * clf.w[1], lambda * clf.w[2]};
    double gb = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
      const double margin =
          y[i] * (clf.w[0] * z[i][0] + clf.w[1] * z[i][1] + clf.w[2] * z[i][2] + clf.b);
      if (margin < 1.0) {
        for (int d = 0; d < 3; ++d) g[d] -= y[i] * z[i][d] * inv_n;
        gb -= y[i] * inv_n;
      }
    }
    for (int d = 0; d < 3; ++d) clf.w[d] -= eta * g[d];
    clf.b -= eta * gb;
  }

  std::vector<double> scores(n);
  for (size_t i = 0; i < n; ++i) scores[i] = clf.decision(features[i]);
  std::tie(clf.platt_a, clf.platt_b) = fit_platt(scores, labels);
  return clf;
}

std::vector<ProbabilityRecord> predict_rule(const RuleClassifier& clf,
                                            const std::vector<std::string>& image_ids,
                                            const std::vector<RuleFeatures>& features,
                                            const std::vector<int>& labels,
                                            const std::string& model_id) {
  if (image_ids.size() != features.size() || features.size() != labels.size())
    throw ValidationError("predict_rule: input length mismatch");
  std::vector<ProbabilityRecord> out(features.size());
  for (size_t i = 0; i < features.size(); ++i)
    out[i] = {image_ids[i], model_id, clf.probability(features[i]), labels[i] == 1 ? 1 : 0};
  return out;
}

void save_rule_classifier_json(const RuleClassifier& clf, const std::string& path) {
  json doc = {{"w", clf.w},
              {"b", clf.b},
              {"feat_mean", clf.feat_mean},
              {"feat_scale", clf.feat_scale},
              {"platt_a", clf.platt_a},
              {"platt_b", clf.platt_b},
              {"config",
               {{"lambda", clf.config.lambda},
                {"iterations", clf.config.iterations},
                {"seed", clf.config.seed}}}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write rule classifier: " + path);
  out << doc.dump(2) << "\n";
}

RuleClassifier load_rule_classifier_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rule classifier: " + path);
  json doc;
  in >> doc;
  RuleClassifier clf;
  auto w = doc.at("w").get<std::vector<double>>();
  auto mean = doc.at("feat_mean").get<std::vector<double>>();
  auto scale = doc.at("feat_scale").get<std::vector<double>>();
  if (w.size() != 3 || mean.size() != 3 || scale.size() != 3)
    throw ValidationError("rule classifier JSON has wrong shapes: " + path);
  std::copy(w.begin(), w.end(), clf.w.begin());
  std::copy(mean.begin(), mean.end(), clf.feat_mean.begin());
  std::copy(scale.begin(), scale.end(), clf.feat_scale.begin());
  clf.b = doc.at("b").get<double>();
  clf.platt_a = doc.at("platt_a").get<double>();
  clf.platt_b = doc.at("platt_b").get<double>();
  if (doc.contains("config")) {
    clf.config.lambda = doc["config"].value("lambda", 0.01);
    clf.config.iterations = doc["config"].value("iterations", 2000);
    clf.config.seed = doc["config"].value("seed", uint64_t{0});
  }
  return clf;
}

}  // namespace cxr
