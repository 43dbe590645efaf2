#pragma once

#include <stdexcept>
#include <string>

namespace maskcon {

#define MASKCON_DEFINE_ERROR(Name)                                     \
  struct Name : std::runtime_error {                                   \
    explicit Name(const std::string& msg) : std::runtime_error(msg) {} \
  }

// numerics
MASKCON_DEFINE_ERROR(ShapeMismatch);
MASKCON_DEFINE_ERROR(ZeroNormRow);
MASKCON_DEFINE_ERROR(NonPositiveTemperature);
MASKCON_DEFINE_ERROR(BadEpoch);

// bank / losses
MASKCON_DEFINE_ERROR(NotNormalized);
MASKCON_DEFINE_ERROR(LabelOutOfRange);

// relations
MASKCON_DEFINE_ERROR(NonFiniteSimilarity);

// data
MASKCON_DEFINE_ERROR(BadConfig);
MASKCON_DEFINE_ERROR(IoError);
MASKCON_DEFINE_ERROR(MalformedRecord);
MASKCON_DEFINE_ERROR(IncompleteCoarseMap);

// eval
MASKCON_DEFINE_ERROR(TooFewPoints);

// cli / training
MASKCON_DEFINE_ERROR(ConfigError);
MASKCON_DEFINE_ERROR(NumericalError);
MASKCON_DEFINE_ERROR(ChecksumMismatch);
MASKCON_DEFINE_ERROR(DimMismatch);

#undef MASKCON_DEFINE_ERROR

}  // namespace maskcon
