#include "cxr/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "cxr/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxr {

std::string to_string(Source s) {
  switch (s) {
    case Source::indiana: return "indiana";
    case Source::jsrt: return "jsrt";
    case Source::shenzhen: return "shenzhen";
    case Source::synthetic: return "synthetic";
  }
  return "?";
}

std::string to_string(View v) { return v == View::frontal ? "frontal" : "lateral"; }

Source source_from_string(const std::string& s) {
  if (s == "indiana") return Source::indiana;
  if (s == "jsrt") return Source::jsrt;
  if (s == "shenzhen") return Source::shenzhen;
  if (s == "synthetic") return Source::synthetic;
  throw ValidationError("unknown dataset source: " + s);
}

View view_from_string(const std::string& s) {
  std::string v = to_lower(s);
  if (v == "frontal") return View::frontal;
  if (v == "lateral") return View::lateral;
  throw ValidationError("unknown view: " + s);
}

std::string normalize_tag(const std::string& raw) {
  std::string tag = to_lower(trim(raw));
  std::replace(tag.begin(), tag.end(), ' ', '_');
  return tag;
}

const ImageRecord* DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

void validate_manifest(const DatasetManifest& manifest) {
  std::unordered_set<std::string> seen;
  for (const auto& r : manifest.records) {
    if (r.id.empty()) throw ValidationError("manifest record with empty id");
    if (!seen.insert(r.id).second) throw ValidationError("duplicate id in manifest: " + r.id);
  }
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = to_lower(p.extension().string());
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".pgm" || ext == ".bmp" ||
         ext == ".img";
}

std::vector<fs::path> sorted_image_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::exists(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

// First of the conventional image subdirectories that actually holds images.
fs::path image_dir_for(const fs::path& root, std::initializer_list<const char*> subdirs) {
  if (!sorted_image_files(root).empty()) return root;
  for (const char* sub : subdirs)
    if (!sorted_image_files(root / sub).empty()) return root / sub;
  return root;
}

// masks/<structure>/<id>.<ext> next to the images, any raster extension.
MaskRefs discover_masks(const fs::path& root, const std::string& id) {
  MaskRefs refs;
  const fs::path base = root / "masks";
  if (!fs::exists(base)) return refs;
  auto probe = [&base, &id](const std::string& structure) -> std::string {
    for (const char* ext : {".png", ".pgm", ".gif", ".bmp", ".jpg"}) {
      fs::path p = base / structure / (id + ext);
      if (fs::exists(p)) return p.string();
    }
    return "";
  };
  refs.lung_left = probe("left_lung");
  refs.lung_right = probe("right_lung");
  refs.heart = probe("heart");
  return refs;
}

DatasetManifest load_synthetic(const fs::path& root) {
  DatasetManifest m;
  const fs::path ann = root / "annotations.csv";
  if (!fs::exists(ann)) {
    if (sorted_image_files(root).empty()) {
      m.provenance = "synthetic:" + root.string() + " (empty)";
      return m;
    }
    throw IoError("missing annotation file: " + ann.string());
  }
  std::ifstream in(ann);
  if (!in) throw IoError("cannot open annotation file: " + ann.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || trim(line).empty()) continue;  // header
    auto fields = parse_csv_line(line);
    if (fields.size() < 3)
      throw ValidationError("unparseable annotation line " + std::to_string(lineno) + " in " +
                            ann.string());
    ImageRecord r;
    r.id = trim(fields[0]);
    r.path = (root / trim(fields[1])).string();
    r.source = Source::synthetic;
    try {
      r.view = view_from_string(trim(fields[2]));
    } catch (const ValidationError&) {
      throw ValidationError("unparseable view on line " + std::to_string(lineno) + " in " +
                            ann.string());
    }
    if (fields.size() > 3) {
      for (const auto& tag : split(fields[3], ';'))
        if (!trim(tag).empty()) r.labels.insert(normalize_tag(tag));
    }
    r.masks = discover_masks(root, r.id);
    m.records.push_back(std::move(r));
  }
  m.provenance = "synthetic:" + root.string();
  return m;
}

// Open-i distribution layout: indiana_reports.csv carries the MeSH annotation
// per study uid, indiana_projections.csv maps uid -> image file + view.
DatasetManifest load_indiana(const fs::path& root) {
  DatasetManifest m;
  const fs::path reports = root / "indiana_reports.csv";
  const fs::path projections = root / "indiana_projections.csv";
  if (!fs::exists(reports) && !fs::exists(projections) && sorted_image_files(root).empty() &&
      sorted_image_files(root / "images").empty()) {
    m.provenance = "indiana:" + root.string() + " (empty)";
    return m;
  }
  if (!fs::exists(reports)) throw IoError("missing annotation file: " + reports.string());
  if (!fs::exists(projections)) throw IoError("missing annotation file: " + projections.string());

  auto header_index = [](const std::vector<std::string>& header,
                         const std::string& name) -> int {
    for (size_t i = 0; i < header.size(); ++i)
      if (to_lower(trim(header[i])) == name) return static_cast<int>(i);
    return -1;
  };

  std::unordered_map<std::string, std::set<std::string>> labels_by_uid;
  {
    std::ifstream in(reports);
    if (!in) throw IoError("cannot open annotation file: " + reports.string());
    std::string line;
    int lineno = 0;
    int uid_col = -1, mesh_col = -1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto fields = parse_csv_line(line);
      if (lineno == 1) {
        uid_col = header_index(fields, "uid");
        mesh_col = header_index(fields, "mesh");
        if (uid_col < 0 || mesh_col < 0)
          throw ValidationError("unparseable header line 1 in " + reports.string() +
                                " (need uid and MeSH columns)");
        continue;
      }
      if (static_cast<int>(fields.size()) <= std::max(uid_col, mesh_col))
        throw ValidationError("unparseable annotation line " + std::to_string(lineno) + " in " +
                              reports.string());
      std::set<std::string> tags;
      for (const auto& entry : split(fields[mesh_col], ';')) {
        // MeSH entries look like "Cardiomegaly/mild"; the head term is the tag.
        std::string head = trim(split(entry, '/').front());
        if (head.empty()) continue;
        std::string tag = normalize_tag(head);
        // "normal" maps to the empty set; "no_indexing" stays a tag so
        // unannotated studies never enter the normal pool.
        if (tag != "normal") tags.insert(tag);
      }
      labels_by_uid[trim(fields[uid_col])] = std::move(tags);
    }
  }

  const fs::path image_dir = fs::exists(root / "images") ? root / "images" : root;
  {
    std::ifstream in(projections);
    if (!in) throw IoError("cannot open annotation file: " + projections.string());
    std::string line;
    int lineno = 0;
    int uid_col = -1, file_col = -1, proj_col = -1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto fields = parse_csv_line(line);
      if (lineno == 1) {
        uid_col = header_index(fields, "uid");
        file_col = header_index(fields, "filename");
        proj_col = header_index(fields, "projection");
        if (uid_col < 0 || file_col < 0 || proj_col < 0)
          throw ValidationError("unparseable header line 1 in " + projections.string() +
                                " (need uid, filename, projection columns)");
        continue;
      }
      if (static_cast<int>(fields.size()) <= std::max({uid_col, file_col, proj_col}))
        throw ValidationError("unparseable annotation line " + std::to_string(lineno) + " in " +
                              projections.string());
      const std::string uid = trim(fields[uid_col]);
      const std::string filename = trim(fields[file_col]);
      auto it = labels_by_uid.find(uid);
      if (it == labels_by_uid.end())
        throw ValidationError("uid " + uid + " on line " + std::to_string(lineno) + " of " +
                              projections.string() + " has no report entry");
      ImageRecord r;
      r.id = fs::path(filename).stem().string();
      r.path = (image_dir / filename).string();
      r.source = Source::indiana;
      std::string proj = to_lower(trim(fields[proj_col]));
      r.view = proj.find("lateral") != std::string::npos ? View::lateral : View::frontal;
      r.labels = it->second;
      r.masks = discover_masks(root, r.id);
      m.records.push_back(std::move(r));
    }
  }
  m.provenance = "indiana:" + root.string();
  return m;
}

// Class is encoded in the filename suffix as distributed:
// CHNCXR_####_0 normal, CHNCXR_####_1 tuberculosis.
DatasetManifest load_shenzhen(const fs::path& root) {
  DatasetManifest m;
  const fs::path image_dir = image_dir_for(root, {"CXR_png", "images"});
  for (const auto& file : sorted_image_files(image_dir)) {
    ImageRecord r;
    r.id = file.stem().string();
    r.path = file.string();
    r.source = Source::shenzhen;
    r.view = View::frontal;
    auto us = r.id.find_last_of('_');
    if (us == std::string::npos || us + 1 >= r.id.size())
      throw ValidationError("cannot parse class suffix from filename: " + file.string());
    const std::string suffix = r.id.substr(us + 1);
    if (suffix == "1")
      r.labels.insert("tuberculosis");
    else if (suffix != "0")
      throw ValidationError("cannot parse class suffix from filename: " + file.string());
    r.masks = discover_masks(root, r.id);
    m.records.push_back(std::move(r));
  }
  m.provenance = "shenzhen:" + root.string();
  return m;
}

// JPCLN* carry a nodule, JPCNN* are nodule-free.
DatasetManifest load_jsrt(const fs::path& root) {
  DatasetManifest m;
  const fs::path image_dir = image_dir_for(root, {"images", "All247images"});
  for (const auto& file : sorted_image_files(image_dir)) {
    ImageRecord r;
    r.id = file.stem().string();
    r.path = file.string();
    r.source = Source::jsrt;
    r.view = View::frontal;
    std::string prefix = to_lower(r.id.substr(0, std::min<size_t>(5, r.id.size())));
    if (prefix == "jpcln")
      r.labels.insert("nodule");
    else if (prefix != "jpcnn")
      throw ValidationError("cannot parse label from JSRT filename: " + file.string());
    r.masks = discover_masks(root, r.id);
    m.records.push_back(std::move(r));
  }
  m.provenance = "jsrt:" + root.string();
  return m;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root, Source source) {
  if (!fs::exists(root)) throw IoError("dataset root does not exist: " + root.string());
  DatasetManifest m;
  switch (source) {
    case Source::synthetic: m = load_synthetic(root); break;
    case Source::indiana: m = load_indiana(root); break;
    case Source::shenzhen: m = load_shenzhen(root); break;
    case Source::jsrt: m = load_jsrt(root); break;
  }
  validate_manifest(m);
  return m;
}

void save_manifest_json(const DatasetManifest& manifest, const std::string& path) {
  json arr = json::array();
  for (const auto& r : manifest.records) {
    json masks = json::object();
    if (!r.masks.lung_left.empty()) masks["lung_left"] = r.masks.lung_left;
    if (!r.masks.lung_right.empty()) masks["lung_right"] = r.masks.lung_right;
    if (!r.masks.heart.empty()) masks["heart"] = r.masks.heart;
    arr.push_back({{"id", r.id},
                   {"path", r.path},
                   {"source", to_string(r.source)},
                   {"view", to_string(r.view)},
                   {"labels", r.labels},
                   {"masks", masks}});
  }
  json doc = {{"provenance", manifest.provenance}, {"records", arr}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << doc.dump(2) << "\n";
}

DatasetManifest load_manifest_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest JSON " + path + ": " + e.what());
  }
  DatasetManifest m;
  m.provenance = doc.value("provenance", "");
  for (const auto& j : doc.at("records")) {
    ImageRecord r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.source = source_from_string(j.at("source").get<std::string>());
    r.view = view_from_string(j.at("view").get<std::string>());
    for (const auto& tag : j.at("labels")) r.labels.insert(tag.get<std::string>());
    if (j.contains("masks")) {
      const auto& masks = j["masks"];
      r.masks.lung_left = masks.value("lung_left", "");
      r.masks.lung_right = masks.value("lung_right", "");
      r.masks.heart = masks.value("heart", "");
    }
    m.records.push_back(std::move(r));
  }
  validate_manifest(m);
  return m;
}

}  // namespace cxr
