#include "wristrehab/batch.hpp"

#include <limits>

#include "wristrehab/digest.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/session_store.hpp"

namespace wr::batch {

namespace {

VerifyOutcome verify_one(const std::string& bytes) {
    VerifyOutcome out;
    try {
        out.ticks = verify_session_bytes(bytes).ticks;
        out.ok = true;
    } catch (const Error& e) {
        out.error = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

SweepOutcome sweep_one(GameKind kind, const GenConstraints& constraints, const PatientProfile& profile,
                       std::uint64_t seed) {
    SweepOutcome out;
    out.seed = seed;
    try {
        const Level level = generate_level(kind, constraints, profile, seed);
        out.feasible = true;
        out.min_gap = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < level.elements.size(); ++i)
            out.min_gap = std::min(out.min_gap, element_time(level.elements[i]) - element_time(level.elements[i - 1]));
        out.digest = sha256_hex(save_level(level));
    } catch (const Error&) {
        out.feasible = false;  // infeasible for this seed
    }
    return out;
}

// Exceptions must not escape an OpenMP region, so malformed input is
// rejected up front; only infeasibility can happen per seed.
void precheck(GameKind kind, const GenConstraints& constraints, const PatientProfile& profile) {
    if (!validate_profile(profile).empty()) throw Error(ErrorCode::InvalidConstraints, "profile is invalid");
    if (!validate_constraints(kind, constraints).empty())
        throw Error(ErrorCode::InvalidConstraints, "constraints are invalid");
}

}  // namespace

std::vector<WristAngles> angles_serial(std::span<const HandFrame> frames, const NeutralPose& calib) {
    std::vector<WristAngles> out(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) out[i] = wrist_angles(frames[i], calib);
    return out;
}

std::vector<WristAngles> angles_parallel(std::span<const HandFrame> frames, const NeutralPose& calib) {
    validate_calibration(calib);
    for (const auto& f : frames) validate_frame(f);
    std::vector<WristAngles> out(frames.size());
    const auto n = static_cast<std::int64_t>(frames.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = wrist_angles(frames[static_cast<std::size_t>(i)], calib);
    return out;
}

std::vector<VerifyOutcome> verify_serial(std::span<const std::string> sessions) {
    std::vector<VerifyOutcome> out(sessions.size());
    for (std::size_t i = 0; i < sessions.size(); ++i) out[i] = verify_one(sessions[i]);
    return out;
}

std::vector<VerifyOutcome> verify_parallel(std::span<const std::string> sessions) {
    std::vector<VerifyOutcome> out(sessions.size());
    const auto n = static_cast<std::int64_t>(sessions.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = verify_one(sessions[static_cast<std::size_t>(i)]);
    return out;
}

std::vector<SweepOutcome> sweep_serial(GameKind kind, const GenConstraints& constraints,
                                       const PatientProfile& profile, std::span<const std::uint64_t> seeds) {
    precheck(kind, constraints, profile);
    std::vector<SweepOutcome> out(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) out[i] = sweep_one(kind, constraints, profile, seeds[i]);
    return out;
}

std::vector<SweepOutcome> sweep_parallel(GameKind kind, const GenConstraints& constraints,
                                         const PatientProfile& profile, std::span<const std::uint64_t> seeds) {
    precheck(kind, constraints, profile);
    std::vector<SweepOutcome> out(seeds.size());
    const auto n = static_cast<std::int64_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out[k] = sweep_one(kind, constraints, profile, seeds[k]);
    }
    return out;
}

}  // namespace wr::batch
