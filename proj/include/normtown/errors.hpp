#pragma once

#include <stdexcept>
#include <string>

namespace normtown {

// Base class for everything thrown by this library. Subclasses carry no extra
// state; the type is the error code and what() is the human-readable detail.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- input data -----------------------------------------------------------
struct MalformedTable : Error { using Error::Error; };
struct MalformedNorms : Error { using Error::Error; };
struct DuplicateNormId : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };

// ---- world / town ---------------------------------------------------------
struct EmptyTown : Error { using Error::Error; };
struct UnknownLocation : Error { using Error::Error; };
struct NoApartment : Error { using Error::Error; };
struct NoLocationOfType : Error { using Error::Error; };

// ---- engine ---------------------------------------------------------------
struct UnknownTarget : Error { using Error::Error; };
struct DayOver : Error { using Error::Error; };
struct InactiveConversation : Error { using Error::Error; };
struct NotParticipant : Error { using Error::Error; };
struct EmptyTrajectory : Error { using Error::Error; };

// ---- policy / backends ----------------------------------------------------
struct MissingField : Error { using Error::Error; };
struct BackendUnavailable : Error { using Error::Error; };
struct CacheMiss : Error { using Error::Error; };
struct BadBackendSpec : Error { using Error::Error; };

// ---- conformal / report ---------------------------------------------------
struct NoValidConfig : Error { using Error::Error; };
struct EmptyResults : Error { using Error::Error; };

}  // namespace normtown
