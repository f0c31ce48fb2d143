#pragma once

#include <stdexcept>
#include <string>

namespace npusim {

// Base class for all typed domain errors. code() is the stable machine-readable
// name used by the CLI ("error <code>: <message>", exit status 2).
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

#define NPUSIM_DEFINE_ERROR(NAME)                                  \
    class NAME : public Error {                                    \
    public:                                                        \
        explicit NAME(const std::string& message)                  \
            : Error(#NAME, message) {}                             \
    };

NPUSIM_DEFINE_ERROR(TileTooLarge)
NPUSIM_DEFINE_ERROR(MisalignedTile)
NPUSIM_DEFINE_ERROR(ColumnOutOfRange)
NPUSIM_DEFINE_ERROR(MisalignedGranule)
NPUSIM_DEFINE_ERROR(SizeMismatch)
NPUSIM_DEFINE_ERROR(NotInvertible)
NPUSIM_DEFINE_ERROR(ShapeMismatch)
NPUSIM_DEFINE_ERROR(HazardUnavoidable)
NPUSIM_DEFINE_ERROR(Deadlock)
NPUSIM_DEFINE_ERROR(CapacityExceeded)
NPUSIM_DEFINE_ERROR(TileShapeMismatch)
NPUSIM_DEFINE_ERROR(TracingDisabled)
NPUSIM_DEFINE_ERROR(TokenOutOfRange)
NPUSIM_DEFINE_ERROR(ConfigError)

#undef NPUSIM_DEFINE_ERROR

} // namespace npusim
