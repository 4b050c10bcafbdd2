#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdfc {

/* All library failures derive from Error so callers can catch one type.
 * Construction-time problems (bad shapes, bad config) and runtime numerics
 * (divergence, singular solves) get distinct subclasses. */
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

/* Parse failure in an external file (IDX, CSV, config); offset is the byte
 * or line where the problem was detected, whichever the format reports. */
struct ParseError : Error {
    std::uint64_t offset;
    ParseError(const std::string& msg, std::uint64_t off)
        : Error(msg + " (at offset " + std::to_string(off) + ")"), offset(off) {}
};

/* Simulated state left the finite/bounded region. step is the 1-based
 * integration step at which the bound was first violated. */
struct DivergenceError : Error {
    long step;
    DivergenceError(const std::string& msg, long at)
        : Error(msg + " (step " + std::to_string(at) + ")"), step(at) {}
};

/* A linear solve or eigendecomposition was too ill-conditioned to trust. */
struct NumericError : Error {
    using Error::Error;
};

struct StaleStateError : Error {
    using Error::Error;
};

}  // namespace sdfc
