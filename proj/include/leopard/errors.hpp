#pragma once

#include <stdexcept>
#include <string>

namespace leopard {

/// Thrown when a numeric routine produces or encounters non-finite values.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown on malformed input files; carries the offending location.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t col)
      : std::runtime_error(what + " (row " + std::to_string(row) + ", column " +
                           std::to_string(col) + ")"),
        row(row),
        col(col) {}
  std::size_t row;
  std::size_t col;
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace leopard
