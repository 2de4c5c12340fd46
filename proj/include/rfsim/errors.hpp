#pragma once

#include <stdexcept>
#include <string>

namespace rfsim {

/// Input outside the mathematical domain of a model (non-positive lengths, rates, ...).
class DomainError : public std::domain_error
{
  public:
    using std::domain_error::domain_error;
};

/// Adaptive ODE integration failed (step-size underflow or step budget exhausted).
class IntegrationError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Correlation functions are undefined when the emitter never emits (Omega = 0).
class UndefinedCorrelationError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Closed-form routine called outside its supported regime.
class UnsupportedRegimeError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

/// Input sequence violates a documented contract (unsorted time tags, ...).
class ContractError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

class NormalizationError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Detector saturated: measured rate times dead time reached one.
class SaturationError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error
{
  public:
    enum class Kind
    {
        rank_deficient,
        not_converged,
        ill_posed,
    };

    FitError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

  private:
    Kind kind_;
};

/// Malformed configuration or data file. `line` is 1-based, 0 when not applicable.
class FormatError : public std::runtime_error
{
  public:
    FormatError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

}  // namespace rfsim
