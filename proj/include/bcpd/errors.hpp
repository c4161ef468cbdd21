#pragma once

#include <stdexcept>
#include <string>

namespace bcpd {

// Malformed shapes: length mismatches, grid mismatches, index ranges, too few elements.
class StructuralError : public std::invalid_argument {
public:
  explicit StructuralError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite input, overflow or underflow of a normalizing constant.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Values outside the mathematical domain of an operation (e.g. log of a non-positive density).
class DomainError : public std::domain_error {
public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Input that carries no information for the requested computation.
class DegenerateError : public std::runtime_error {
public:
  explicit DegenerateError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bcpd
