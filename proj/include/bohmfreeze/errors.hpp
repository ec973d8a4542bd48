#pragma once

#include <stdexcept>
#include <string>

namespace bohmfreeze {

/// Argument lies outside the coordinate patch or violates a physical constraint.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The wave function is too small at the requested point for its phase to be meaningful.
class NodeProximityError : public std::runtime_error {
public:
    NodeProximityError(const std::string& what, double amplitude, double threshold)
        : std::runtime_error(what), amplitude_(amplitude), threshold_(threshold) {}

    double amplitude() const noexcept { return amplitude_; }
    double threshold() const noexcept { return threshold_; }

private:
    double amplitude_;
    double threshold_;
};

/// A numerical scheme failed to meet its accuracy or conservation target.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace bohmfreeze
