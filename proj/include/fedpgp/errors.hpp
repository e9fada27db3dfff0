#pragma once

#include <stdexcept>
#include <string>

namespace fedpgp {

// Error taxonomy shared by every module. Each class maps to one failure
// category so tests can assert the exact kind.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class InvalidParameter : public Error {
public:
    explicit InvalidParameter(const std::string& what) : Error(what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

class DegenerateVector : public Error {
public:
    explicit DegenerateVector(const std::string& what) : Error(what) {}
};

class UnknownClass : public Error {
public:
    explicit UnknownClass(const std::string& what) : Error(what) {}
};

class NumericalFailure : public Error {
public:
    explicit NumericalFailure(const std::string& what) : Error(what) {}
};

class NoParticipants : public Error {
public:
    explicit NoParticipants(const std::string& what) : Error(what) {}
};

class UndefinedMetric : public Error {
public:
    explicit UndefinedMetric(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace fedpgp
