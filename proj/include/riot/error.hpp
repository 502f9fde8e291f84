#pragma once

#include <stdexcept>
#include <string>

namespace riot {

enum class ErrorCode { kValidation, kDomain, kNotFound, kConflict, kInternal, kIo, kProtocol };

const char* to_string(ErrorCode code);

/// Base of every error the library throws. The code drives CLI exit status
/// and HTTP status mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m, std::string d = {})
      : Error(ErrorCode::kValidation, m, std::move(d)) {}
};

/// A model argument outside the range its fit was measured on.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& m, std::string d = {})
      : Error(ErrorCode::kDomain, m, std::move(d)) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& m, std::string d = {})
      : Error(ErrorCode::kNotFound, m, std::move(d)) {}
};

class ConflictError : public Error {
 public:
  explicit ConflictError(const std::string& m, std::string d = {})
      : Error(ErrorCode::kConflict, m, std::move(d)) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m, std::string d = {})
      : Error(ErrorCode::kIo, m, std::move(d)) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& m, std::string d = {})
      : Error(ErrorCode::kProtocol, m, std::move(d)) {}
};

/// Calibration cannot be produced, e.g. a missing state or an unidentifiable fit.
class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& m, std::string d = {})
      : Error(ErrorCode::kValidation, m, std::move(d)) {}
};

int exit_code_for(ErrorCode code);

}  // namespace riot
