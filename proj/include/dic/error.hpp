#pragma once

#include <stdexcept>
#include <string>

namespace dic {

// Every failure raised by the library derives from Error so callers can map
// the whole family onto one exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DIC_DEFINE_ERROR(Name)              \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

DIC_DEFINE_ERROR(DimensionError);
DIC_DEFINE_ERROR(ConfigError);
DIC_DEFINE_ERROR(StepError);
DIC_DEFINE_ERROR(InjectionError);
DIC_DEFINE_ERROR(AlignmentError);
DIC_DEFINE_ERROR(CapabilityError);
DIC_DEFINE_ERROR(NumericError);
DIC_DEFINE_ERROR(ParseError);
DIC_DEFINE_ERROR(RangeError);
DIC_DEFINE_ERROR(IoError);

#undef DIC_DEFINE_ERROR

}  // namespace dic
