#pragma once

#include <stdexcept>
#include <string>

namespace spamdet {

// Base of every error thrown by the library. The CLI maps these to exit 1.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

#define SPAMDET_DEFINE_ERROR(Name)                                             \
    class Name : public Error {                                                \
      public:                                                                  \
        using Error::Error;                                                    \
    }

SPAMDET_DEFINE_ERROR(IngestError);
SPAMDET_DEFINE_ERROR(SchemaError);
SPAMDET_DEFINE_ERROR(SplitError);
SPAMDET_DEFINE_ERROR(VocabError);
SPAMDET_DEFINE_ERROR(ConfigError);
SPAMDET_DEFINE_ERROR(ShapeError);
SPAMDET_DEFINE_ERROR(LoadError);
SPAMDET_DEFINE_ERROR(InputError);
SPAMDET_DEFINE_ERROR(StateError);
SPAMDET_DEFINE_ERROR(BatchError);
SPAMDET_DEFINE_ERROR(TrainingError);
SPAMDET_DEFINE_ERROR(CacheError);

#undef SPAMDET_DEFINE_ERROR

} // namespace spamdet
