#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reachseg {

// Shape mismatches and bad arguments use std::invalid_argument directly.

/// A computation produced or consumed a NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was invoked on an object that is not in the required state
/// (e.g. joint training before pre-training, K-Means with too few points).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A metric is not defined for the given inputs (single-class AUROC, zero reach).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The barrier objective was evaluated outside its domain.
class InfeasibleIterate : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Input exceeds what an algorithm supports (e.g. tuple-space enumeration guard).
class Unsupported : public std::length_error {
 public:
  using std::length_error::length_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace reachseg
