#pragma once

#include <stdexcept>
#include <string>

namespace itp {

// All library failures derive from Error so the CLI can map them to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepLimitExceeded : Error { using Error::Error; };
struct Unsolvable : Error { using Error::Error; };
struct UnparseableState : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct UnseenTransition : Error { using Error::Error; };
struct NoAdmissibleActions : Error { using Error::Error; };
struct InadmissibleAction : Error { using Error::Error; };
struct EmptyResults : Error { using Error::Error; };
struct DegenerateEndpoints : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct StaleArtifact : Error { using Error::Error; };

}  // namespace itp
