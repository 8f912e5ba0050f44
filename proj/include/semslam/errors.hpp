#ifndef SEMSLAM_ERRORS_HPP
#define SEMSLAM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace semslam {

/// Base class for all recoverable pipeline errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownKey : public Error {
public:
    using Error::Error;
};

class Underconstrained : public Error {
public:
    using Error::Error;
};

class SingularSystem : public Error {
public:
    using Error::Error;
};

class SingularCovariance : public Error {
public:
    using Error::Error;
};

class UnknownLabel : public Error {
public:
    using Error::Error;
};

class EmbeddingUnavailable : public Error {
public:
    using Error::Error;
};

class MalformedResponse : public Error {
public:
    using Error::Error;
};

class MisalignedCorrection : public Error {
public:
    using Error::Error;
};

class UnknownObject : public Error {
public:
    using Error::Error;
};

class OutOfOrderFrame : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

// Carries the offending file/frame/field context in the message.
class SchemaViolation : public Error {
public:
    using Error::Error;
};

} // namespace semslam

#endif
