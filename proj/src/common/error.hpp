#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace attnmix {

// Error codes shared by the C++ core and the C API surface.
enum class Errc {
    invalid_argument = 1,
    degenerate_norm,
    invalid_p,
    nonfinite_input,
    nonfinite_gradient,
    nonfinite_update,
    parse_error,
    empty_input,
    empty_after_filter,
    invalid_rule,
    invalid_target,
    empty_ranks,
    version_mismatch,
    corrupt_checkpoint,
    vocabulary_mismatch,
    unknown_item,
    invalid_config,
    io_error,
    internal,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, std::string message) {
    throw Error(code, std::move(message));
}

} // namespace attnmix
