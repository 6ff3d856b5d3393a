#pragma once

#include <stdexcept>
#include <string>

namespace hmflow {

/// Argument outside the mathematical domain of an operation (tau <= 0, r <= 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Input data that cannot be processed (NaN, unbounded, mismatched grids).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure did not reach its stated accuracy.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Picard iterate left the 2*C1 tube of the window bound.
class BoundExceeded : public std::runtime_error {
public:
    BoundExceeded(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Successive C^1 gaps stopped shrinking within the iteration budget.
class NoContraction : public std::runtime_error {
public:
    NoContraction(const std::string& what, double time, double ratio)
        : std::runtime_error(what), time_(time), ratio_(ratio) {}
    double time() const noexcept { return time_; }
    double ratio() const noexcept { return ratio_; }

private:
    double time_;
    double ratio_;
};

/// Non-finite value produced while evaluating the nonlinearity.
class BlowupSignal : public std::runtime_error {
public:
    BlowupSignal(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

#define HMFLOW_REQUIRE(cond, Exc, msg) \
    do {                               \
        if (!(cond)) throw Exc(msg);   \
    } while (0)

} // namespace hmflow
