#pragma once

#include <stdexcept>
#include <string>

namespace shelab {

//! Invalid configuration or violated precondition on user-supplied parameters.
class ConfigError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

//! Index or time outside the grid, or ordering violations (s > t).
class RangeError : public std::out_of_range
{
  public:
    using std::out_of_range::out_of_range;
};

//! Mathematical domain violation (log of zero, empty regression window, ...).
class DomainError : public std::domain_error
{
  public:
    using std::domain_error::domain_error;
};

//! Domain too narrow for the requested horizon, slope, or window.
class MarginError : public ConfigError
{
  public:
    using ConfigError::ConfigError;
};

}  // namespace shelab
