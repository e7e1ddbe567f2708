#pragma once

#include <stdexcept>
#include <string>

namespace contramod {

/// Broad failure classes; the CLI maps each onto its exit code.
enum class ErrorKind {
  Usage,    // bad arguments or configuration
  Data,     // malformed, missing or inconsistent input data
  Numeric,  // NaN/Inf during training or evaluation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return {ErrorKind::Usage, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::Data, what}; }
inline Error numeric_error(const std::string& what) { return {ErrorKind::Numeric, what}; }

}  // namespace contramod
