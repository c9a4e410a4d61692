#pragma once

#include <stdexcept>
#include <string>

namespace mf2pop {

// Bad population index, regime/unknown mismatch, invalid parameter combos.
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid model/scenario parameters detected at construction time.
class ParameterError : public std::runtime_error {
public:
    explicit ParameterError(const std::string& what) : std::runtime_error(what) {}
};

// Time stepping failed: CFL violation, tridiagonal breakdown, NaN blow-up.
class StepError : public std::runtime_error {
public:
    StepError(const std::string& what, int time_index)
        : std::runtime_error(what), time_index(time_index) {}
    int time_index;
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Scenario file / schema problems; `key_path` names the offending entry.
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(const std::string& what, std::string key_path)
        : std::runtime_error(what), key_path(std::move(key_path)) {}
    std::string key_path;
};

} // namespace mf2pop
