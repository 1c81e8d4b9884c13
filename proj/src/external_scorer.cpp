#include "cxr/external_scorer.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

#include "cxr/common.hpp"

namespace cxr {

LineProcess::LineProcess(const std::string& command) : command_(command) {
  int to_pipe[2], from_pipe[2];
  if (pipe(to_pipe) != 0 || pipe(from_pipe) != 0)
    throw IoError("cannot create pipes for: " + command);
  pid_ = fork();
  if (pid_ < 0) throw IoError("fork failed for: " + command);
  if (pid_ == 0) {
    dup2(to_pipe[0], STDIN_FILENO);
    dup2(from_pipe[1], STDOUT_FILENO);
    close(to_pipe[0]);
    close(to_pipe[1]);
    close(from_pipe[0]);
    close(from_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_pipe[0]);
  close(from_pipe[1]);
  to_child_ = fdopen(to_pipe[1], "w");
  from_child_ = fdopen(from_pipe[0], "r");
  if (!to_child_ || !from_child_) throw IoError("fdopen failed for: " + command);
}

LineProcess::~LineProcess() {
  if (to_child_) fclose(to_child_);
  if (from_child_) fclose(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::string LineProcess::request(const std::string& line) {
  if (fprintf(to_child_, "%s\n", line.c_str()) < 0 || fflush(to_child_) != 0)
    throw IoError("cannot write to scorer process: " + command_);
  std::string response;
  int c;
  while ((c = fgetc(from_child_)) != EOF && c != '\n') response += static_cast<char>(c);
  if (c == EOF && response.empty())
    throw IoError("scorer process closed its output: " + command_);
  return response;
}

double ExternalScorer::score_file(const std::string& image_path) {
  const std::string response = trim(proc_.request(image_path));
  double p = 0.0;
  try {
    p = std::stod(response);
  } catch (const std::exception&) {
    throw ValidationError("scorer returned non-numeric response \"" + response + "\"");
  }
  if (p < 0.0 || p > 1.0)
    throw ValidationError("scorer probability outside [0,1]: " + response);
  return p;
}

std::vector<float> ExternalFeatureExtractor::extract(const std::string& image_path,
                                                     const std::string& tap_layer) {
  const std::string response = proc_.request(image_path + "\t" + tap_layer);
  std::istringstream in(response);
  std::vector<float> values;
  float v;
  while (in >> v) values.push_back(v);
  if (values.empty())
    throw ValidationError("feature extractor returned no values for " + image_path);
  return values;
}

}  // namespace cxr
