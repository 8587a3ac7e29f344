#pragma once

#include <stdexcept>
#include <string>

namespace ptarget {

/// Bad input: malformed files, schema violations, out-of-range arguments.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a trustworthy answer
/// (separation, rank deficiency, non-convergence, degenerate probabilities).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Re-throws the active exception with `prefix` prepended, keeping its type.
[[noreturn]] inline void rethrow_with_prefix(const std::string& prefix) {
  try {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  }
}

}  // namespace ptarget
