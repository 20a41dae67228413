// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tsup {

/// Raised when shapes, channel counts or configuration values are inconsistent.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a dataset file is missing, malformed or inconsistent.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised on invalid API usage (e.g. backward without a recorded forward).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when an optimization run fails at runtime (divergence, corrupt resume state).
class TrainError : public std::runtime_error {
public:
    explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace tsup
