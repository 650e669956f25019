#pragma once

#include <stdexcept>
#include <string>

namespace wbmr {

// Typed failures, mapped onto process exit codes by the CLI:
//   config 2, numerical 3, io 4.
class Error : public std::runtime_error {
 public:
  enum class Code { config = 2, numerical = 3, io = 4 };

  Error(Code code, const std::string& kind, const std::string& msg)
      : std::runtime_error(msg), code_(code), kind_(kind) {}

  Code code() const { return code_; }
  const std::string& kind() const { return kind_; }

 private:
  Code code_;
  std::string kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg, const std::string& kind = "config")
      : Error(Code::config, kind, msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(Code::io, "io", msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg, const std::string& kind = "numerical")
      : Error(Code::numerical, kind, msg) {}
};

// Nearly-parallel or zero basis vectors handed to the 6D rotation decoder.
class DegenerateRotationError : public NumericalError {
 public:
  explicit DegenerateRotationError(const std::string& msg)
      : NumericalError(msg, "degenerate_rotation") {}
};

// Camera view axis parallel to gravity: the horizontal heading is undefined.
class GimbalDegenerateError : public NumericalError {
 public:
  explicit GimbalDegenerateError(const std::string& msg)
      : NumericalError(msg, "gimbal_degenerate") {}
};

// Point set with too little spread for a similarity alignment.
class DegenerateAlignmentError : public NumericalError {
 public:
  explicit DegenerateAlignmentError(const std::string& msg)
      : NumericalError(msg, "degenerate_alignment") {}
};

// Body extent too small to form a meaningful upper-body ratio.
class UndefinedRatioError : public NumericalError {
 public:
  explicit UndefinedRatioError(const std::string& msg)
      : NumericalError(msg, "undefined_ratio") {}
};

}  // namespace wbmr
