#pragma once

#include <stdexcept>
#include <string>

namespace puncta {

// Bad arguments, malformed configuration, violated preconditions. CLI exit code 1.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem and format failures. CLI exit code 2.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace puncta
