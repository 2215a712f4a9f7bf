#pragma once

// Wrist kinematics: hand-pose frames in, wrist angles and discrete
// press/flap gestures out. Everything here is a pure function of its inputs
// except GestureDetector, which is a small streaming wrapper.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <span>
#include <string_view>

namespace wr {

enum class Hand : std::uint8_t { Left = 0, Right = 1 };

inline constexpr std::array<Hand, 2> kBothHands{Hand::Left, Hand::Right};

std::string_view to_string(Hand hand);
std::optional<Hand> hand_from_string(std::string_view text);

/// Left/right pair where either side may be missing.
template <class T>
struct PerHand {
    std::optional<T> left;
    std::optional<T> right;

    std::optional<T>& operator[](Hand h) { return h == Hand::Left ? left : right; }
    const std::optional<T>& operator[](Hand h) const { return h == Hand::Left ? left : right; }

    bool operator==(const PerHand&) const = default;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Vec3&) const = default;
};

double norm(const Vec3& v);
double distance(const Vec3& a, const Vec3& b);

/// One tracked hand. Positions in cm, device-centred: x right, y up,
/// z toward the player.
struct HandPose {
    Vec3 palm_position;
    Vec3 hand_direction{0.0, 0.0, -1.0};  // palm to fingers, unit
    Vec3 palm_normal{0.0, -1.0, 0.0};     // unit
    double confidence = 1.0;

    bool operator==(const HandPose&) const = default;
};

struct HandFrame {
    double timestamp_ms = 0.0;  // since session start
    PerHand<HandPose> hands;

    bool operator==(const HandFrame&) const = default;
};

/// Degrees. flexion_extension > 0 is extension (bend up); deviation > 0 is
/// toward +x (player's right).
struct Angles {
    double flexion_extension = 0.0;
    double deviation = 0.0;

    bool operator==(const Angles&) const = default;
};

using WristAngles = PerHand<Angles>;

/// Calibration offsets subtracted from raw angles, per hand, in [-45, 45].
struct NeutralPose {
    Angles left;
    Angles right;

    const Angles& operator[](Hand h) const { return h == Hand::Left ? left : right; }
    Angles& operator[](Hand h) { return h == Hand::Left ? left : right; }

    bool operator==(const NeutralPose&) const = default;
};

inline constexpr double kMaxAngle = 90.0;
inline constexpr double kMaxCalibrationOffset = 45.0;
inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr double kDegenerateNorm = 0.5;
inline constexpr double kDefaultSmoothingAlpha = 0.3;

/// Checks the HandFrame invariants (unit vectors, confidence in [0,1]).
/// Throws Error(MalformedFrame) describing the first problem found.
void validate_frame(const HandFrame& frame);

/// Throws Error(InvalidArgument) if any offset is outside [-45, 45].
void validate_calibration(const NeutralPose& calib);

/// Wrist angles from the hand direction, with the forearm assumed fixed
/// along -z. Throws Error(MalformedFrame) when a present hand has a
/// direction of norm < 0.5.
WristAngles wrist_angles(const HandFrame& frame, const NeutralPose& calib = {});

/// Exponential moving average per component. A hand absent in `next` is
/// absent in the output; a hand new in `next` starts from `next`.
WristAngles smooth(const WristAngles& prev, const WristAngles& next, double alpha);

// ---------------------------------------------------------------------------
// Gestures

enum class GestureKind : std::uint8_t { Press, Flap };

std::string_view to_string(GestureKind kind);
std::optional<GestureKind> gesture_kind_from_string(std::string_view text);

struct GestureSpec {
    GestureKind kind = GestureKind::Press;
    double min_sweep = 25.0;      // degrees
    double max_duration = 250.0;  // ms
    double trigger_angle = 10.0;  // degrees past neutral, in the gesture direction
    double refractory = 300.0;    // ms

    bool operator==(const GestureSpec&) const = default;
};

bool is_valid(const GestureSpec& spec);

struct GestureEvent {
    Hand hand = Hand::Right;
    GestureKind kind = GestureKind::Press;
    double timestamp_ms = 0.0;
    double peak_velocity = 0.0;  // deg/s, negative for press

    bool operator==(const GestureEvent&) const = default;
};

struct AngleSample {
    double timestamp_ms = 0.0;
    double angle = 0.0;  // flexion_extension, degrees
};

/// Evaluates the newest sample of `window`: fires when a monotone sweep in
/// the gesture direction ends there, spans at least min_sweep degrees within
/// max_duration ms, ends beyond trigger_angle, and the previous event of the
/// same hand and kind (if any) is at least `refractory` ms old.
std::optional<GestureEvent> detect_gesture(std::span<const AngleSample> window,
                                           const GestureSpec& spec,
                                           Hand hand = Hand::Right,
                                           std::optional<double> last_event_ms = std::nullopt);

/// Sliding-window front end for detect_gesture on a live stream.
class GestureDetector {
public:
    GestureDetector(Hand hand, GestureSpec spec) : hand_(hand), spec_(spec) {}

    std::optional<GestureEvent> push(double timestamp_ms, double flexion_extension);

    /// Drops history; used when the hand disappears from view.
    void reset();

    const GestureSpec& spec() const { return spec_; }
    Hand hand() const { return hand_; }

private:
    Hand hand_;
    GestureSpec spec_;
    std::deque<AngleSample> samples_;
    std::optional<double> last_event_ms_;
};

// ---------------------------------------------------------------------------
// Setup checks

enum class DistanceStatus : std::uint8_t { Ok, TooClose, TooFar };

std::string_view to_string(DistanceStatus status);
std::optional<DistanceStatus> distance_status_from_string(std::string_view text);

struct DistanceBand {
    double min_cm = 15.0;
    double max_cm = 30.0;

    bool operator==(const DistanceBand&) const = default;
};

DistanceStatus hand_distance_status(const Vec3& left_palm, const Vec3& right_palm,
                                    const DistanceBand& band);

enum class FrameWarning : std::uint8_t { FovWarning, ProximityWarning };

inline constexpr double kFieldOfViewDeg = 150.0;
inline constexpr double kMinPalmHeightCm = 10.0;

std::set<FrameWarning> frame_quality(const HandFrame& frame);

}  // namespace wr
