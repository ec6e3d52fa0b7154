#pragma once

#include <stdexcept>
#include <string>

namespace sfi {

// Raised when a sampling frequency cannot be served by the SFI layers
// (the adjusted kernel size or stride would be fractional).
class UnsupportedSamplingFrequency : public std::runtime_error {
 public:
  UnsupportedSamplingFrequency(int fs, const std::string& what)
      : std::runtime_error(what), fs_(fs) {}
  int fs() const { return fs_; }

 private:
  int fs_;
};

// Malformed or unsupported file contents (WAV, checkpoint, dataset).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values encountered during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sfi
