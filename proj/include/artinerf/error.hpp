// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace artinerf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad argument, shape mismatch or invalid configuration.
class ParameterError : public Error {
  public:
    using Error::Error;
};

/// Missing, unreadable or malformed input file. Carries the file and field.
class DataError : public Error {
  public:
    DataError(std::string path, std::string field, const std::string &what)
        : Error(path + (field.empty() ? std::string() : " [" + field + "]") + ": " + what),
          path_(std::move(path)), field_(std::move(field)) {}

    const std::string &path() const noexcept { return path_; }
    const std::string &field() const noexcept { return field_; }

  private:
    std::string path_;
    std::string field_;
};

/// Non-finite values produced during training or rendering.
class NumericError : public Error {
  public:
    using Error::Error;
};

/// A library invariant was violated. Indicates a bug, not bad input.
class InternalError : public Error {
  public:
    using Error::Error;
};

} // namespace artinerf
