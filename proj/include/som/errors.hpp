#ifndef SOM_ERRORS_HPP
#define SOM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace som {

/// Argument outside an operation's precondition (bad index, dimension, range).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Problem too large for an exponential-time routine.
class SizeError : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Inputs that contradict each other, e.g. a matching that is not optimal.
class InconsistencyError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// An internal invariant failed at runtime.
class InvariantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace som

#endif // SOM_ERRORS_HPP
