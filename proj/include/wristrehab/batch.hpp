#pragma once

// Batch workloads over many independent items. Each kernel has a serial
// reference and an OpenMP twin with identical, order-preserving output.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wristrehab/kinematics.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/profiles.hpp"

namespace wr::batch {

/// Calibrated wrist angles of every frame (frames must be valid).
std::vector<WristAngles> angles_serial(std::span<const HandFrame> frames, const NeutralPose& calib);
std::vector<WristAngles> angles_parallel(std::span<const HandFrame> frames, const NeutralPose& calib);

struct VerifyOutcome {
    bool ok = false;
    std::string error;  // code and message when !ok
    std::uint64_t ticks = 0;

    bool operator==(const VerifyOutcome&) const = default;
};

/// Integrity check plus replay of each session file's bytes.
std::vector<VerifyOutcome> verify_serial(std::span<const std::string> sessions);
std::vector<VerifyOutcome> verify_parallel(std::span<const std::string> sessions);

struct SweepOutcome {
    std::uint64_t seed = 0;
    bool feasible = false;
    double min_gap = 0.0;  // smallest gap between consecutive elements
    std::string digest;    // sha256 of the saved level

    bool operator==(const SweepOutcome&) const = default;
};

/// Generates one level per seed.
std::vector<SweepOutcome> sweep_serial(GameKind kind, const GenConstraints& constraints,
                                       const PatientProfile& profile, std::span<const std::uint64_t> seeds);
std::vector<SweepOutcome> sweep_parallel(GameKind kind, const GenConstraints& constraints,
                                         const PatientProfile& profile, std::span<const std::uint64_t> seeds);

}  // namespace wr::batch
