#pragma once

#include <stdexcept>
#include <string>

namespace malis {

/// Malformed file contents. what() names the failed check ("magic", "length", ...).
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& check, const std::string& detail)
      : std::runtime_error(check + ": " + detail), check_(check) {}
  const std::string& check() const { return check_; }

 private:
  std::string check_;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& cause)
      : std::runtime_error(path + ": " + cause), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A stored value falls outside its admissible range.
class RangeError : public std::out_of_range {
 public:
  RangeError(std::size_t index, const std::string& detail)
      : std::out_of_range("value at index " + std::to_string(index) + " " + detail),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class NoPathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyEvaluation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace malis
