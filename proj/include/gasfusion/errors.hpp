#pragma once

#include <stdexcept>
#include <string>

namespace gasfusion {

// Common base so callers can catch any library error in one handler.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidShape : Error {
    using Error::Error;
};
struct ShapeMismatch : Error {
    using Error::Error;
};
struct InvalidRange : Error {
    using Error::Error;
};
struct TapeMismatch : Error {
    using Error::Error;
};
struct InvalidRate : Error {
    using Error::Error;
};
struct EmptySequence : Error {
    using Error::Error;
};
struct InvalidLabel : Error {
    using Error::Error;
};
struct EmptyDataset : Error {
    using Error::Error;
};
struct ModalityMissing : Error {
    using Error::Error;
};
struct InvalidDistribution : Error {
    using Error::Error;
};
struct SplitError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct EmptyInput : Error {
    using Error::Error;
};
struct InvalidConfig : Error {
    using Error::Error;
};

} // namespace gasfusion
