#pragma once

#include <stdexcept>
#include <string>

namespace ocil {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSchedule : public Error { using Error::Error; };
class InvalidDataset : public Error { using Error::Error; };
class InvalidInput : public Error { using Error::Error; };
class InvalidTask : public Error { using Error::Error; };
class InvalidEval : public Error { using Error::Error; };
class InvalidConfig : public Error { using Error::Error; };
class EmptyMemory : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class LabelError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };

// Parse failures carry the 1-based line they occurred on.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ocil
