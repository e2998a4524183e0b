#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace trunet {

// Tensor shapes or arguments that do not fit an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid model, training or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Missing or inconsistent dataset content.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content; carries the byte offset where parsing stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Checkpoint payload does not match its stored CRC-32.
class ChecksumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or values during training.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::int64_t batch_index)
      : std::runtime_error(what), batch_index_(batch_index) {}

  std::int64_t batch_index() const noexcept { return batch_index_; }

 private:
  std::int64_t batch_index_;
};

}  // namespace trunet
