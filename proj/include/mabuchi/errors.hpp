#pragma once

#include <stdexcept>
#include <string>

namespace mabuchi {

/// Invalid grid or solver configuration (bad step, too few nodes, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated a precondition (index out of range, wrong slice tag, ...).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A numerical procedure broke down (singular solve, barrier violation, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input left the plurisubharmonic cone beyond tolerance.
class PshViolation : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Argument outside the domain of a map (e.g. a vanishing Mobius denominator).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or version-mismatched serialized data.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failure while reading or writing artifacts.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mabuchi
