#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace perfhom {

enum class ErrorKind {
    alignment,
    containment,
    tiling,
    parameter,
    state,
    solver,
    degeneracy,
    assembly,
    config,
    invariant,
    mismatch,
    io,
};

inline std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::containment: return "containment";
    case ErrorKind::tiling: return "tiling";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::state: return "state";
    case ErrorKind::solver: return "solver";
    case ErrorKind::degeneracy: return "degeneracy";
    case ErrorKind::assembly: return "assembly";
    case ErrorKind::config: return "config";
    case ErrorKind::invariant: return "invariant";
    case ErrorKind::mismatch: return "mismatch";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

/// Every failure raised by the library carries a kind so the CLI can emit a
/// machine-readable record.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

} // namespace perfhom
