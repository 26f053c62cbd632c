#pragma once

#include <stdexcept>
#include <string>

namespace scvae {

// Bad configuration, malformed input files, or unwritable paths.
// The CLI maps these to exit code 1.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// API misuse: calling an operation with state it documented as required
// (missing gradients, misaligned reports, untaped handles).
class usage_error : public std::logic_error {
public:
    explicit usage_error(const std::string& what) : std::logic_error(what) {}
};

// Non-finite values or failed numeric preconditions at runtime.
// The CLI maps these to exit code 2.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace scvae
