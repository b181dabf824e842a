#pragma once

#include <stdexcept>
#include <string>

namespace gsq {

// Base of every error raised by the library. `kind()` is the stable name
// reported by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string &what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string &kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define GSQ_DEFINE_ERROR(Name)                                              \
    struct Name : Error {                                                   \
        explicit Name(const std::string &what = "") : Error(#Name, what) {} \
    };

GSQ_DEFINE_ERROR(OffRange)
GSQ_DEFINE_ERROR(OffSupport)
GSQ_DEFINE_ERROR(Incomparable)
GSQ_DEFINE_ERROR(DegreeTooLarge)
GSQ_DEFINE_ERROR(Overflow)
GSQ_DEFINE_ERROR(SchemeTooCoarse)
GSQ_DEFINE_ERROR(SizeTooLarge)
GSQ_DEFINE_ERROR(NotContraction)
GSQ_DEFINE_ERROR(NotStrictContraction)
GSQ_DEFINE_ERROR(NotSelfAdjoint)
GSQ_DEFINE_ERROR(Unbounded)
GSQ_DEFINE_ERROR(PreconditionViolated)
GSQ_DEFINE_ERROR(QuadratureFailure)
GSQ_DEFINE_ERROR(NoDecay)
GSQ_DEFINE_ERROR(HypothesisFailed)
GSQ_DEFINE_ERROR(ConfigInvalid)

#undef GSQ_DEFINE_ERROR

}  // namespace gsq
