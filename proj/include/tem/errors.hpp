#pragma once

#include <stdexcept>
#include <string>

namespace tem {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An exponential moment mu^(a) diverges (a reached an active rate).
class InfiniteMoment : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of the operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Initial datum does not belong to the fading-memory phase space.
class NotInPhaseSpace : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity entered a segment or a scheme update.
class NonFiniteValue : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A check needs model metadata (e.g. dissipativity constants) that the model does not carry.
class MissingMetadata : public Error {
public:
    using Error::Error;
};

class SizeMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace tem
