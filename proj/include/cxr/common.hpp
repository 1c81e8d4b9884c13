#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cxr {

// Exit-code mapping: 0 success, 1 validation, 2 I/O, 3 numerical failure.
enum class ErrorKind { validation = 1, io = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(ErrorKind::validation, msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(ErrorKind::io, msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(ErrorKind::numerical, msg) {}
};

uint64_t fnv1a64(const void* data, size_t n, uint64_t state = 14695981039346656037ull);
uint64_t fnv1a64(const std::string& s, uint64_t state = 14695981039346656037ull);
uint64_t hash_file(const std::string& path);

std::string to_lower(std::string s);
std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

// One CSV record, honoring double-quoted fields (annotation files contain
// commas inside quotes).
std::vector<std::string> parse_csv_line(const std::string& line);

// Fisher-Yates with an explicit modulo draw; std::shuffle's draw sequence is
// implementation-defined, this one is stable across platforms.
template <typename T, typename Rng>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace cxr
