#pragma once
// Failure taxonomy for the library. Every throw site uses one of these so
// callers (CLI, python bindings, tests) can match on the condition by type.

#include <stdexcept>
#include <string>

namespace bloch {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// lattice / potential setup
struct SingularLattice : Error { using Error::Error; };
struct UnsupportedOrder : Error { using Error::Error; };

// band structure
struct TruncationMismatch : Error { using Error::Error; };
struct EigensolverFailure : Error { using Error::Error; };
struct GapBelowThreshold : Error {
    int band;
    double gap;
    GapBelowThreshold(int band_, double gap_, const std::string& msg)
        : Error(msg), band(band_), gap(gap_) {}
};
struct DegenerateBand : Error { using Error::Error; };
struct CurvatureMethodMismatch : Error { using Error::Error; };
struct OverlapTooSmall : Error { using Error::Error; };
struct GaugeMismatch : Error { using Error::Error; };

// envelopes and coupled dynamics
struct SymplecticViolation : Error { using Error::Error; };
struct BranchDiscontinuity : Error { using Error::Error; };
struct SymplecticDrift : Error { using Error::Error; };
struct EnvelopeUnavailable : Error { using Error::Error; };

// grids and direct propagation
struct DomainTooSmall : Error { using Error::Error; };
struct StepTooLarge : Error { using Error::Error; };
struct ResolutionTooLow : Error { using Error::Error; };
struct CommensurabilityError : Error { using Error::Error; };
struct GridMismatch : Error { using Error::Error; };

// configuration and output
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace bloch
