#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wristrehab/kinematics.hpp"

namespace wr {

enum class Handedness : std::uint8_t { Left, Right, Both };

std::string_view to_string(Handedness h);
std::optional<Handedness> handedness_from_string(std::string_view text);

/// In-session easing policy: when enough of the recent element outcomes are
/// misses, challenge is eased; after max_adaptations the game may be stopped.
struct AdaptPolicy {
    int miss_window = 5;
    double miss_threshold = 0.6;
    double ease_factor = 0.8;
    int max_adaptations = 3;
    bool stop_after_exhausted = true;

    bool operator==(const AdaptPolicy&) const = default;
};

/// Gesture thresholds shared by the press and flap detectors.
struct GestureTuning {
    double min_sweep = 25.0;
    double max_duration = 250.0;
    double trigger_angle = 10.0;
    double refractory = 300.0;

    GestureSpec spec(GestureKind kind) const {
        return GestureSpec{kind, min_sweep, max_duration, trigger_angle, refractory};
    }

    bool operator==(const GestureTuning&) const = default;
};

struct PatientProfile {
    static constexpr int kSchemaVersion = 1;

    std::string patient_id = "patient";
    Handedness handedness = Handedness::Right;
    double rom_extension_max = 40.0;
    double rom_flexion_max = 40.0;
    double rom_deviation_left_max = 30.0;
    double rom_deviation_right_max = 30.0;
    double session_length = 300.0;  // seconds
    GestureTuning gesture_spec;
    DistanceBand hand_distance_band;
    double safety_grace = 1000.0;  // ms
    AdaptPolicy adaptation_policy;
    /// +1: in the skiing slap scheme, extension moves the skier toward +x.
    int ski_rotated_sign = 1;

    bool operator==(const PatientProfile&) const = default;
};

struct Violation {
    std::string field;
    std::string message;

    bool operator==(const Violation&) const = default;
};

using Violations = std::vector<Violation>;

/// Every invariant violation, each tagged with its field name. Empty means ok.
Violations validate_profile(const PatientProfile& profile);

/// Strict JSON document: unknown fields, missing fields and wrong types are
/// ParseErrors naming the field. Does not validate invariants.
PatientProfile load_profile(std::string_view document);
std::string save_profile(const PatientProfile& profile);

/// Reads and parses a profile file (Error(Io) when unreadable).
PatientProfile read_profile_file(const std::string& path);

std::string describe(const Violations& violations);

}  // namespace wr
