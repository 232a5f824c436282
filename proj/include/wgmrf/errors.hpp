#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wgmrf {

// Base for every error raised by the library. The category drives the CLI
// exit code: input problems map to 2, numeric failures to 3, resource limits
// to 4.
class Error : public std::runtime_error {
 public:
  enum class Category { input, numeric, resource };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(Category::input, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line,
             const std::string& what)
      : Error(Category::input,
              source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class OutOfDomain : public Error {
 public:
  OutOfDomain(std::size_t index, const std::string& what)
      : Error(Category::input, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Mean direction undefined (zero resultant) or concentration zero.
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what)
      : Error(Category::numeric, what) {}
};

class NotSpdError : public Error {
 public:
  NotSpdError(std::size_t index, const std::string& what)
      : Error(Category::numeric, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(Category::numeric, what) {}
};

class ResourceLimit : public Error {
 public:
  explicit ResourceLimit(const std::string& what)
      : Error(Category::resource, what) {}
};

}  // namespace wgmrf
