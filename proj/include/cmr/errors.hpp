#pragma once

#include <stdexcept>
#include <string>

namespace cmr {

// Base class for every error the library raises. The CLI maps these to
// exit code 2 (data error); command-line misuse is handled separately.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    ParseError(const std::string& file, long line, const std::string& msg)
        : Error(file + ":" + std::to_string(line) + ": " + msg), line_number(line) {}
    long line_number;
};

struct IoError : Error { using Error::Error; };
struct DuplicateId : Error { using Error::Error; };
struct EmptyVocabulary : Error { using Error::Error; };
struct EmptyCorpus : Error { using Error::Error; };
struct InvalidHyperparameter : Error { using Error::Error; };
struct VocabularyMismatch : Error { using Error::Error; };
struct InternalConsistencyError : Error { using Error::Error; };
struct InvalidPhi : Error { using Error::Error; };
struct InvalidDimension : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct EmptyCaption : Error { using Error::Error; };
struct EmptyModality : Error { using Error::Error; };
struct DegenerateOutput : Error { using Error::Error; };
struct NoRelevantItems : Error { using Error::Error; };
struct DegenerateSplit : Error { using Error::Error; };

}  // namespace cmr
