#pragma once

#include <stdexcept>
#include <string>

namespace lyapjet {

// Base class for everything this library throws. The CLI maps subclasses to
// exit codes: configuration problems exit 2, numerical aborts exit 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- configuration / input errors (exit 2 in the CLI) ---

class ConfigError : public Error { public: using Error::Error; };

class ParseError : public ConfigError { public: using ConfigError::ConfigError; };
class ValidationError : public ConfigError { public: using ConfigError::ConfigError; };
class UnknownBuiltin : public ConfigError { public: using ConfigError::ConfigError; };
class BadParams : public ConfigError { public: using ConfigError::ConfigError; };

// --- numerical errors ---

class SingularMatrix : public Error { public: using Error::Error; };
class ZeroVector : public Error { public: using Error::Error; };
class DimensionTooSmall : public Error { public: using Error::Error; };
class NotNormalised : public Error { public: using Error::Error; };
class NonInvertibleA : public Error { public: using Error::Error; };
class Overflow : public Error { public: using Error::Error; };
class NearZeroDenominator : public Error { public: using Error::Error; };
class SingularPerturbedAtom : public Error { public: using Error::Error; };
class NoTrackedVector : public Error { public: using Error::Error; };
class ZeroT : public Error { public: using Error::Error; };

// Raised when an estimator rejects more than its rejection budget; the run
// is aborted because the result would silently depend on the discard rule.
class HypothesisSuspect : public Error { public: using Error::Error; };

} // namespace lyapjet
