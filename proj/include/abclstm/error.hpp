#pragma once

#include <stdexcept>
#include <string>

namespace abclstm {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class EmptyCorpusError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Unknown character, out-of-range id, bad argument value.
class ValueError : public Error {
public:
    using Error::Error;
};

// Bad magic, version, truncated or malformed file.
class FormatError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class DivergedError : public Error {
public:
    using Error::Error;
};

} // namespace abclstm
