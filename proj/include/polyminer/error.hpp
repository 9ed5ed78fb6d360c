#pragma once

#include <stdexcept>
#include <string>

namespace polyminer {

// Root of every exception thrown by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or missing configuration.
class config_error : public error {
public:
    using error::error;
};

// Bad input data: parse failures, unknown combinations, empty inputs.
class data_error : public error {
public:
    using error::error;
};

class dimension_error : public data_error {
public:
    dimension_error(const std::string& what, std::size_t expected, std::size_t actual)
        : data_error(what + ": expected dimension " + std::to_string(expected) + ", got "
                     + std::to_string(actual)),
          expected_(expected),
          actual_(actual) {}

    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

// A ratio whose denominator vanished (e.g. relative risk with c == 0).
class undefined_ratio_error : public data_error {
public:
    using data_error::data_error;
};

} // namespace polyminer
