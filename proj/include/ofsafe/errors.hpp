#pragma once

#include <stdexcept>
#include <string>

namespace ofsafe {

// Broad classes used by the CLI to pick exit codes: config/usage problems
// exit with 1, numerical/assumption failures with 2.
enum class ErrorKind {
    Parse,          // expression or config syntax
    Config,         // structurally valid but unusable configuration
    Singular,       // linear solve pivot underflow
    NonConvergence, // iteration budget exhausted / NaN poisoning
    Asymmetry,      // symmetric-only operation fed an asymmetric matrix
    NonHurwitz,     // spectrum touches the closed right half plane
    Indefinite,     // Lyapunov solution not positive definite
    Domain,         // model assumption violated at a point (e.g. a(x) <= 0)
    Overflow,       // values left the representable range
    CapViolation,   // epsilon at or above a validity cap
    Infeasible,     // no parameter in the scanned range meets the target
    BlowUp,         // trajectory norm exceeded the divergence threshold
    GridMismatch,   // fields on different grids combined
    EmptySet,       // operation requires a nonempty region
    Cfl,            // forced time step violates the CFL bound
    Numeric,        // residual/tolerance check failed
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

// Parse errors carry a 0-based character position into the offending text.
class ParseError : public Error {
  public:
    ParseError(std::size_t position, const std::string& msg)
        : Error(ErrorKind::Parse, msg + " (at position " + std::to_string(position) + ")"),
          position_(position) {}
    std::size_t position() const { return position_; }

  private:
    std::size_t position_;
};

} // namespace ofsafe
