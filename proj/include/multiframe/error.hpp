#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mf {

/// Failure categories shared by every module. The CLI maps them onto exit codes.
enum class ErrorKind {
  input,                   ///< precondition on caller-supplied values violated
  parse,                   ///< malformed dataset / estimate document
  generation,              ///< scene could not be rendered (degenerate projection)
  degenerate,              ///< geometric degeneracy (parallel rays, coincident points, ...)
  rank_deficient,          ///< linear system lacks the rank the solver needs
  no_solution,             ///< no admissible real solution
  ambiguous,               ///< more than one admissible solution where one is required
  inconsistent,            ///< measurements contradict each other beyond tolerance
  not_essential,           ///< composite matrix violates the two-view structure
  regime_mismatch,         ///< dataset regime does not fit the requested solver
  evaluation,              ///< estimate and truth cannot be compared
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::input: return "input";
    case ErrorKind::parse: return "parse";
    case ErrorKind::generation: return "generation";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::rank_deficient: return "rank-deficient";
    case ErrorKind::no_solution: return "no-solution";
    case ErrorKind::ambiguous: return "ambiguous";
    case ErrorKind::inconsistent: return "inconsistent";
    case ErrorKind::not_essential: return "not-essential";
    case ErrorKind::regime_mismatch: return "regime-mismatch";
    case ErrorKind::evaluation: return "evaluation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace mf
