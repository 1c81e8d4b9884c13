#include "cxr/splits.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "cxr/common.hpp"

using nlohmann::json;

namespace cxr {

std::vector<std::string> SplitSpec::train_ids() const {
  std::vector<std::string> ids = train_pos;
  ids.insert(ids.end(), train_neg.begin(), train_neg.end());
  return ids;
}

std::vector<std::string> SplitSpec::test_ids() const {
  std::vector<std::string> ids = test_pos;
  ids.insert(ids.end(), test_neg.begin(), test_neg.end());
  return ids;
}

std::vector<std::string> SplitSpec::all_ids() const {
  std::vector<std::string> ids = train_ids();
  auto t = test_ids();
  ids.insert(ids.end(), t.begin(), t.end());
  return ids;
}

SplitSpec make_balanced_split(const DatasetManifest& manifest, const std::string& abnormality,
                              int n_train, int n_test, uint64_t seed, bool include_lateral) {
  if (n_train < 0 || n_test < 0)
    throw ValidationError("make_balanced_split: negative per-class count");
  std::vector<std::string> positives, negatives;
  for (const auto& r : manifest.records) {
    if (!include_lateral && r.view == View::lateral) continue;
    if (r.has_label(abnormality))
      positives.push_back(r.id);
    else if (r.is_normal())
      negatives.push_back(r.id);
  }
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end());

  const int need = n_train + n_test;
  if (static_cast<int>(positives.size()) < need)
    throw ValidationError("insufficient positives for \"" + abnormality + "\": need " +
                          std::to_string(need) + ", have " + std::to_string(positives.size()));
  if (static_cast<int>(negatives.size()) < need)
    throw ValidationError("insufficient normals for \"" + abnormality + "\": need " +
                          std::to_string(need) + ", have " + std::to_string(negatives.size()));

  std::mt19937_64 rng(seed);
  deterministic_shuffle(positives, rng);
  deterministic_shuffle(negatives, rng);

  SplitSpec s;
  s.abnormality = abnormality;
  s.seed = seed;
  s.test_pos.assign(positives.begin(), positives.begin() + n_test);
  s.train_pos.assign(positives.begin() + n_test, positives.begin() + need);
  s.test_neg.assign(negatives.begin(), negatives.begin() + n_test);
  s.train_neg.assign(negatives.begin() + n_test, negatives.begin() + need);
  for (auto* list : {&s.test_pos, &s.train_pos, &s.test_neg, &s.train_neg})
    std::sort(list->begin(), list->end());
  return s;
}

std::vector<SplitSpec> make_size_sweep(const DatasetManifest& manifest,
                                       const std::string& abnormality,
                                       const std::vector<int>& sizes, int n_test,
                                       const std::vector<uint64_t>& seeds, bool include_lateral) {
  std::vector<SplitSpec> out;
  for (int size : sizes)
    for (uint64_t seed : seeds)
      out.push_back(
          make_balanced_split(manifest, abnormality, size, n_test, seed, include_lateral));
  return out;
}

void validate_split(const SplitSpec& split, const DatasetManifest* manifest) {
  if (split.train_pos.size() != split.train_neg.size())
    throw ValidationError("split is not class-balanced in train lists");
  if (split.test_pos.size() != split.test_neg.size())
    throw ValidationError("split is not class-balanced in test lists");
  std::unordered_set<std::string> seen;
  for (const auto* list : {&split.train_pos, &split.train_neg, &split.test_pos, &split.test_neg})
    for (const auto& id : *list) {
      if (!seen.insert(id).second)
        throw ValidationError("id appears in more than one split list: " + id);
      if (manifest && manifest->find(id) == nullptr)
        throw ValidationError("split id not present in manifest: " + id);
    }
}

void save_split_json(const SplitSpec& split, const std::string& path) {
  json doc = {{"abnormality", split.abnormality}, {"seed", split.seed},
              {"train_pos", split.train_pos},     {"train_neg", split.train_neg},
              {"test_pos", split.test_pos},       {"test_neg", split.test_neg}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split: " + path);
  out << doc.dump(2) << "\n";
}

SplitSpec load_split_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("malformed split JSON " + path + ": " + e.what());
  }
  SplitSpec s;
  s.abnormality = doc.at("abnormality").get<std::string>();
  s.seed = doc.at("seed").get<uint64_t>();
  s.train_pos = doc.at("train_pos").get<std::vector<std::string>>();
  s.train_neg = doc.at("train_neg").get<std::vector<std::string>>();
  s.test_pos = doc.at("test_pos").get<std::vector<std::string>>();
  s.test_neg = doc.at("test_neg").get<std::vector<std::string>>();
  validate_split(s);
  return s;
}

}  // namespace cxr
