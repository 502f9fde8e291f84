#include "riot/error.hpp"

namespace riot {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kInternal: return "internal";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kProtocol: return "protocol";
  }
  return "internal";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation:
    case ErrorCode::kDomain:
    case ErrorCode::kNotFound:
    case ErrorCode::kConflict: return 2;
    case ErrorCode::kIo: return 3;
    case ErrorCode::kProtocol: return 4;
    case ErrorCode::kInternal: return 1;
  }
  return 1;
}

}  // namespace riot
