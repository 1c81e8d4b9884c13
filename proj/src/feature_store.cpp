#include "cxr/feature_store.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "cxr/common.hpp"

namespace cxr {

void save_feature_store(const std::string& path, const BackboneSpec& spec,
                        const std::vector<FeatureVector>& features) {
  const BackboneSpec r = spec.resolved();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write feature store: " + path);
  out << "# cxr-features v1 family=" << to_string(r.family) << " tap=" << r.tap_layer
      << " input_side=" << r.input_side << " preprocessing=" << to_string(r.preprocessing)
      << "\n";
  out << "image_id,dim,values\n";
  out.precision(9);  // float round-trip
  for (const auto& fv : features) {
    out << fv.image_id << "," << fv.dim();
    for (float v : fv.values) out << "," << v;
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<FeatureVector> load_feature_store(const std::string& path,
                                              FeatureStoreHeader* header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature store: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# cxr-features v1", 0) != 0)
    throw ValidationError("not a v1 feature store: " + path);
  if (header) {
    for (const auto& tok : split(line, ' ')) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "family") header->family = val;
      else if (key == "tap") header->tap_layer = val;
      else if (key == "input_side") header->input_side = std::stoi(val);
      else if (key == "preprocessing") header->preprocessing = val;
    }
  }
  std::getline(in, line);  // column header
  std::vector<FeatureVector> out;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    FeatureVector fv;
    size_t pos = line.find(',');
    if (pos == std::string::npos)
      throw ValidationError("unparseable feature row on line " + std::to_string(lineno) + " of " +
                            path);
    fv.image_id = line.substr(0, pos);
    size_t next = line.find(',', pos + 1);
    if (next == std::string::npos)
      throw ValidationError("unparseable feature row on line " + std::to_string(lineno) + " of " +
                            path);
    const int dim = std::stoi(line.substr(pos + 1, next - pos - 1));
    fv.values.reserve(dim);
    const char* p = line.data() + next + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(p, end, v);
      if (ec != std::errc())
        throw ValidationError("bad feature value on line " + std::to_string(lineno) + " of " +
                              path);
      fv.values.push_back(v);
      p = ptr < end && *ptr == ',' ? ptr + 1 : ptr;
    }
    if (fv.dim() != dim)
      throw ValidationError("feature row dim mismatch on line " + std::to_string(lineno) +
                            " of " + path);
    for (float v : fv.values)
      if (!std::isfinite(v))
        throw ValidationError("non-finite feature value on line " + std::to_string(lineno) +
                              " of " + path);
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace cxr
