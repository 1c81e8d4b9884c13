#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace cxr {

// Line-oriented child process bridge. One request line in, one response line
// out, over the child's stdin/stdout; the child must flush per line.
class LineProcess {
 public:
  explicit LineProcess(const std::string& command);
  ~LineProcess();
  LineProcess(const LineProcess&) = delete;
  LineProcess& operator=(const LineProcess&) = delete;

  std::string request(const std::string& line);
  const std::string& command() const { return command_; }

 private:
  std::string command_;
  int pid_ = -1;
  FILE* to_child_ = nullptr;
  FILE* from_child_ = nullptr;
};

// Protocol: request = image file path on one line, response = probability in
// [0,1] on one line. Used for occlusion probing with third-party models.
class ExternalScorer {
 public:
  explicit ExternalScorer(const std::string& command) : proc_(command) {}
  double score_file(const std::string& image_path);

 private:
  LineProcess proc_;
};

// Protocol: request = "<image path>\t<tap layer>", response = whitespace
// separated feature values on one line.
class ExternalFeatureExtractor {
 public:
  explicit ExternalFeatureExtractor(const std::string& command) : proc_(command) {}
  std::vector<float> extract(const std::string& image_path, const std::string& tap_layer);

 private:
  LineProcess proc_;
};

}  // namespace cxr
