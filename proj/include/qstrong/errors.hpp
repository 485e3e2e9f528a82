#pragma once

#include <stdexcept>
#include <string>

namespace qstrong {

/// Base class of every error thrown by the library. The category maps onto
/// the command-line exit codes (2 validation, 3 non-convergence, 4 I/O).
class Error : public std::runtime_error {
public:
  enum class Category { validation = 2, convergence = 3, io = 4 };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

private:
  Category category_;
};

/// Precondition / range / constraint violation.
class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& what) : Error(Category::validation, what) {}
};

/// Iterative solver failed to converge.
class ConvergenceError : public Error {
public:
  explicit ConvergenceError(const std::string& what) : Error(Category::convergence, what) {}
};

/// File could not be read, written or parsed.
class IoError : public Error {
public:
  explicit IoError(const std::string& what) : Error(Category::io, what) {}
};

/// Malformed input file; carries the offending 1-based line number.
class ParseError : public IoError {
public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : IoError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

namespace detail {

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ValidationError(what);
}

} // namespace detail
} // namespace qstrong
