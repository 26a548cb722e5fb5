#pragma once

#include <stdexcept>
#include <string>

namespace meristem {

// Thrown by tissue builders and loaders when a graph violates the
// geometric invariants (symmetry, positivity, connectivity, ...).
class InvalidGeometryError : public std::runtime_error {
public:
    explicit InvalidGeometryError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown by file loaders; the message names the offending cell/edge/key.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Bad or missing model/run configuration (unknown key, missing kappa_T, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dimension mismatch between a state vector and the tissue/model.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// A linear operator required to be invertible was (numerically) singular.
class SingularError : public std::runtime_error {
public:
    explicit SingularError(const std::string& what) : std::runtime_error(what) {}
};

// Generic numerical failure (divergence, step-size underflow, ...).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace meristem
