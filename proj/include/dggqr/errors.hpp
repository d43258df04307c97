#pragma once

#include <stdexcept>
#include <string>

namespace dggqr {

/// Parameter or argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Result not representable (e.g. survival underflow when forming a hazard).
class OverflowError : public std::overflow_error {
public:
  using std::overflow_error::overflow_error;
};

/// Closed form lost all significant digits.
class PrecisionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class ScenarioError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class LoadError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class OutputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace dggqr
