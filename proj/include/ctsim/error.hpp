#pragma once

#include <stdexcept>
#include <string>

namespace ctsim {

enum class Errc {
  kInvalidArgument = 1,
  kPastEvent,
  kOutOfRange,
  kParse,
  kInvalidScenario,
  kIo,
  kRuntime,
};

// Single exception type for the core; the C API maps `code()` onto status
// values.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ctsim
