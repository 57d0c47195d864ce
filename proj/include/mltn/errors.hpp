#pragma once

#include <stdexcept>
#include <string>

namespace mltn {

// Base class for every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error { using Error::Error; };
struct AxisOutOfRange : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct SizeLimit : Error { using Error::Error; };
struct NumericalError : Error { using Error::Error; };
struct CacheMismatch : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct CountMismatch : Error { using Error::Error; };
struct IntegrityError : Error { using Error::Error; };
struct LabelOutOfRange : Error { using Error::Error; };
struct DegenerateLabels : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };

}  // namespace mltn
