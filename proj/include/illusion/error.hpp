#pragma once

#include <stdexcept>
#include <string>

namespace illusion {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value is outside its documented domain (bad luminance order, bad permutation, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Requested geometry does not fit (canvas too small, disk pushed off-canvas, ...).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Malformed file content (flow files, PNGs, manifests).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace illusion
