#ifndef PCFMEM_ERRORS_HPP_
#define PCFMEM_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pcfmem {

// Input violates a documented bound (geometry limits, tolerances, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numeric evaluation requested outside the supported domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed serialized input. `position` is a line number for JSONL
// corpora and a byte offset for single JSON documents.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " (at " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an optimization step produces a non-finite quantity.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pcfmem

#endif  // PCFMEM_ERRORS_HPP_
