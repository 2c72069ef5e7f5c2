#pragma once

#include <stdexcept>
#include <string>

namespace loadshift {

enum class ErrorCode {
  validation,        // static data inconsistent (bad profile, c > u-bar, unresolved ids)
  schema,            // malformed scenario file
  empty_horizon,
  conditioning,      // interpolation Gram matrix unusable
  numerical_domain,  // non-finite or out-of-domain intermediate
  infeasible,
  limit,             // combinatorial or node limit exceeded
  controller,        // closed-loop controller failure
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "validation";
    case ErrorCode::schema: return "schema";
    case ErrorCode::empty_horizon: return "empty_horizon";
    case ErrorCode::conditioning: return "conditioning";
    case ErrorCode::numerical_domain: return "numerical_domain";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::limit: return "limit";
    case ErrorCode::controller: return "controller";
  }
  return "unknown";
}

}  // namespace loadshift
