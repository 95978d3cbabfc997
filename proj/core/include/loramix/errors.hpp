#pragma once

#include <stdexcept>
#include <string>

namespace loramix {

#define LORAMIX_DEFINE_ERROR(Name)                                      \
    struct Name : std::runtime_error {                                  \
        explicit Name(const std::string& msg) : std::runtime_error(msg) {} \
    }

LORAMIX_DEFINE_ERROR(ShapeError);
LORAMIX_DEFINE_ERROR(LengthError);
LORAMIX_DEFINE_ERROR(FormatError);
LORAMIX_DEFINE_ERROR(EncodingError);
LORAMIX_DEFINE_ERROR(DegenerateEmbeddingError);
LORAMIX_DEFINE_ERROR(EmptyCorpusError);
LORAMIX_DEFINE_ERROR(MissingTargetError);
LORAMIX_DEFINE_ERROR(IncompatibleAdaptersError);
LORAMIX_DEFINE_ERROR(WeightError);
LORAMIX_DEFINE_ERROR(RegistryError);
LORAMIX_DEFINE_ERROR(InsufficientContextError);
LORAMIX_DEFINE_ERROR(DivergenceError);
LORAMIX_DEFINE_ERROR(ConfigError);

#undef LORAMIX_DEFINE_ERROR

}  // namespace loramix
