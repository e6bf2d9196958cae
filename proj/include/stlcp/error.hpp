#pragma once

#include <stdexcept>
#include <string>

namespace stlcp {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define STLCP_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

STLCP_DEFINE_ERROR(ParseError);
STLCP_DEFINE_ERROR(ShapeError);
STLCP_DEFINE_ERROR(LabelError);
STLCP_DEFINE_ERROR(SplitError);
STLCP_DEFINE_ERROR(HorizonError);
STLCP_DEFINE_ERROR(ParameterError);
STLCP_DEFINE_ERROR(TemplateError);
STLCP_DEFINE_ERROR(InputError);
STLCP_DEFINE_ERROR(ConfigError);
STLCP_DEFINE_ERROR(IoError);
STLCP_DEFINE_ERROR(NormalizationError);

#undef STLCP_DEFINE_ERROR

}  // namespace stlcp
