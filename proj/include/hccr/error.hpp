#ifndef HCCR_ERROR_HPP
#define HCCR_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hccr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or operand shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Scalar argument outside its allowed range, or an invalid input value.
class ValueError : public Error {
 public:
  using Error::Error;
};

// Malformed byte stream; carries the offset of the offending record.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// On-disk container (pack / checkpoint) is not readable as such.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Probability support violation and similar mathematical domain issues.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Dataset cannot satisfy a sampling request.
class DataError : public Error {
 public:
  using Error::Error;
};

// Batch structure does not match what a loss expects.
class StructureError : public Error {
 public:
  using Error::Error;
};

// Inconsistent model/training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Sample with no ink; callers skip and log these.
class DegenerateSampleError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace hccr

#endif
