#pragma once

#include <stdexcept>
#include <string>

namespace dro {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class NumericsError : public Error { using Error::Error; };
class GraphError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class GenerationError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };

}  // namespace dro
