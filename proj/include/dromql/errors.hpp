#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dromql {

// Parse failure; carries the byte offset into the offending text.
class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& message, std::size_t offset)
      : std::runtime_error(message), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class DuplicateCollectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownCollectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyCollectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyIndexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LengthMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GroupTooSmallError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateRewardsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsetDifficultyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EndpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MockExhaustedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dromql
