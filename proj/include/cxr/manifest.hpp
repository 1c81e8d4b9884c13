#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace cxr {

enum class Source { indiana, jsrt, shenzhen, synthetic };
enum class View { frontal, lateral };

std::string to_string(Source s);
std::string to_string(View v);
Source source_from_string(const std::string& s);
View view_from_string(const std::string& s);

struct MaskRefs {
  std::string lung_left;
  std::string lung_right;
  std::string heart;
  bool empty() const { return lung_left.empty() && lung_right.empty() && heart.empty(); }
};

// "normal" is an empty label set, never a tag.
struct ImageRecord {
  std::string id;
  std::string path;
  Source source = Source::synthetic;
  View view = View::frontal;
  std::set<std::string> labels;
  MaskRefs masks;

  bool is_normal() const { return labels.empty(); }
  bool has_label(const std::string& tag) const { return labels.count(tag) > 0; }
};

struct DatasetManifest {
  std::vector<ImageRecord> records;
  std::string provenance;

  const ImageRecord* find(const std::string& id) const;
};

// Directory conventions per source are documented in the README. Label text
// is normalized to lowercase with multi-word tags joined by underscores.
DatasetManifest load_manifest(const std::filesystem::path& root, Source source);

void save_manifest_json(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest_json(const std::string& path);

// Enforces unique ids and declared enum values; loaders and JSON I/O both run it.
void validate_manifest(const DatasetManifest& manifest);

std::string normalize_tag(const std::string& raw);

}  // namespace cxr
