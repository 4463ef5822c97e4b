#pragma once

#include <stdexcept>
#include <string>

namespace sdn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SDN_DEFINE_ERROR(Name)                        \
    class Name : public Error {                       \
    public:                                           \
        explicit Name(const std::string& what)        \
            : Error(std::string(#Name ": ") + what) { \
        }                                             \
    }

SDN_DEFINE_ERROR(PreconditionError);
SDN_DEFINE_ERROR(ParseError);
SDN_DEFINE_ERROR(InvalidTopology);
SDN_DEFINE_ERROR(IoError);
SDN_DEFINE_ERROR(ShapeMismatch);
SDN_DEFINE_ERROR(NonFiniteValue);
SDN_DEFINE_ERROR(CardinalityMismatch);
SDN_DEFINE_ERROR(DegenerateEdge);
SDN_DEFINE_ERROR(NonManifoldEdge);
SDN_DEFINE_ERROR(VersionMismatch);
SDN_DEFINE_ERROR(CorruptChecksum);
SDN_DEFINE_ERROR(DataError);
SDN_DEFINE_ERROR(MissingGroundTruth);

#undef SDN_DEFINE_ERROR

inline void require(bool condition, const std::string& what)
{
    if (!condition) throw PreconditionError(what);
}

} // namespace sdn
