#ifndef LAPLAB_ERROR_HPP
#define LAPLAB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace laplab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a tensor shape does not match what an operation expects.
class ShapeError : public Error {
public:
    ShapeError(const std::string& what, long node = -1)
        : Error(node >= 0 ? "node " + std::to_string(node) + ": " + what : what), node_(node) {}
    long node() const { return node_; }

private:
    long node_;
};

class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& what, long node)
        : Error("node " + std::to_string(node) + ": " + what), node_(node) {}
    long node() const { return node_; }

private:
    long node_;
};

// Precondition violations on argument values.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace laplab

#endif  // LAPLAB_ERROR_HPP
