#pragma once

#include <stdexcept>
#include <string>

namespace tfno {

/// Malformed or schema-violating configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reference solver failure: Picard non-convergence or bound violation (exit code 3).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient (exit code 4).
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint, dataset or scenario files that do not fit together (exit code 5).
class IncompatibleArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tfno
