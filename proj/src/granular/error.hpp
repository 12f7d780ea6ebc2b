#pragma once

#include <stdexcept>
#include <string>

namespace granular {

enum class ErrorKind
{
  InvalidArgument,
  Parse,
  Validation,
  Io,
  Numeric,
  State,
};

/// Single exception type for the engine; the kind maps onto C API status codes.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace granular
