#include "wristrehab/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "wristrehab/error.hpp"

namespace wr {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double clamp_angle(double deg) { return std::clamp(deg, -kMaxAngle, kMaxAngle); }

bool is_unit(const Vec3& v) { return std::abs(norm(v) - 1.0) <= kUnitNormTolerance; }

}  // namespace

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedFrame: return "MalformedFrame";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::InvalidConstraints: return "InvalidConstraints";
        case ErrorCode::InfeasibleConstraints: return "InfeasibleConstraints";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::InvalidLevel: return "InvalidLevel";
        case ErrorCode::IllegalMode: return "IllegalMode";
        case ErrorCode::OutOfOrderEntry: return "OutOfOrderEntry";
        case ErrorCode::DigestMismatch: return "DigestMismatch";
        case ErrorCode::ReplayDivergence: return "ReplayDivergence";
        case ErrorCode::UnknownChannel: return "UnknownChannel";
        case ErrorCode::TraceParseError: return "TraceParseError";
        case ErrorCode::BridgeDisconnected: return "BridgeDisconnected";
        case ErrorCode::UnknownProfile: return "UnknownProfile";
        case ErrorCode::UnknownLevel: return "UnknownLevel";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::ValidationFailed: return "ValidationFailed";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

std::string_view to_string(Hand hand) { return hand == Hand::Left ? "left" : "right"; }

std::optional<Hand> hand_from_string(std::string_view text) {
    if (text == "left") return Hand::Left;
    if (text == "right") return Hand::Right;
    return std::nullopt;
}

double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

double distance(const Vec3& a, const Vec3& b) {
    return norm(Vec3{a.x - b.x, a.y - b.y, a.z - b.z});
}

void validate_frame(const HandFrame& frame) {
    if (!std::isfinite(frame.timestamp_ms) || frame.timestamp_ms < 0.0)
        throw Error(ErrorCode::MalformedFrame, "frame timestamp must be finite and non-negative");
    for (Hand h : kBothHands) {
        const auto& pose = frame.hands[h];
        if (!pose) continue;
        const std::string side{to_string(h)};
        if (!is_unit(pose->hand_direction))
            throw Error(ErrorCode::MalformedFrame, side + ".hand_direction is not a unit vector");
        if (!is_unit(pose->palm_normal))
            throw Error(ErrorCode::MalformedFrame, side + ".palm_normal is not a unit vector");
        if (!(pose->confidence >= 0.0 && pose->confidence <= 1.0))
            throw Error(ErrorCode::MalformedFrame, side + ".confidence outside [0, 1]");
        const auto& p = pose->palm_position;
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw Error(ErrorCode::MalformedFrame, side + ".palm_position is not finite");
    }
}

void validate_calibration(const NeutralPose& calib) {
    for (Hand h : kBothHands) {
        const Angles& a = calib[h];
        if (std::abs(a.flexion_extension) > kMaxCalibrationOffset ||
            std::abs(a.deviation) > kMaxCalibrationOffset)
            throw Error(ErrorCode::InvalidArgument,
                        "calibration offset for " + std::string(to_string(h)) + " hand outside [-45, 45]");
    }
}

WristAngles wrist_angles(const HandFrame& frame, const NeutralPose& calib) {
    WristAngles out;
    for (Hand h : kBothHands) {
        const auto& pose = frame.hands[h];
        if (!pose) continue;
        const Vec3& d = pose->hand_direction;
        const double n = norm(d);
        if (!(n >= kDegenerateNorm))
            throw Error(ErrorCode::MalformedFrame,
                        "degenerate hand_direction for " + std::string(to_string(h)) + " hand");
        const double dx = d.x / n;
        const double dy = d.y / n;
        const double dz = d.z / n;
        const double fe = std::asin(std::clamp(dy, -1.0, 1.0)) * kRadToDeg;
        const double dev = std::atan2(dx, -dz) * kRadToDeg;
        out[h] = Angles{clamp_angle(fe - calib[h].flexion_extension),
                        clamp_angle(dev - calib[h].deviation)};
    }
    return out;
}

WristAngles smooth(const WristAngles& prev, const WristAngles& next, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "smoothing alpha must be in (0, 1]");
    WristAngles out;
    for (Hand h : kBothHands) {
        if (!next[h]) continue;
        if (!prev[h] || alpha == 1.0) {
            out[h] = next[h];
            continue;
        }
        const Angles& p = *prev[h];
        const Angles& n = *next[h];
        out[h] = Angles{alpha * n.flexion_extension + (1.0 - alpha) * p.flexion_extension,
                        alpha * n.deviation + (1.0 - alpha) * p.deviation};
    }
    return out;
}

std::string_view to_string(GestureKind kind) { return kind == GestureKind::Press ? "press" : "flap"; }

std::optional<GestureKind> gesture_kind_from_string(std::string_view text) {
    if (text == "press") return GestureKind::Press;
    if (text == "flap") return GestureKind::Flap;
    return std::nullopt;
}

bool is_valid(const GestureSpec& spec) {
    return spec.min_sweep > 0.0 && spec.max_duration > 0.0 && spec.refractory >= 0.0 &&
           std::isfinite(spec.trigger_angle);
}

std::optional<GestureEvent> detect_gesture(std::span<const AngleSample> window,
                                           const GestureSpec& spec, Hand hand,
                                           std::optional<double> last_event_ms) {
    if (window.size() < 2) return std::nullopt;
    const double dir = spec.kind == GestureKind::Press ? -1.0 : 1.0;
    const std::size_t last = window.size() - 1;
    const AngleSample& end = window[last];

    if (last_event_ms && end.timestamp_ms - *last_event_ms < spec.refractory) return std::nullopt;
    if (dir * end.angle < spec.trigger_angle) return std::nullopt;

    // The sweep start is the earliest sample reachable by walking back along
    // a monotone run inside the duration bound; monotonicity makes it the
    // largest available sweep.
    std::size_t start = last;
    double peak = 0.0;
    while (start > 0) {
        const AngleSample& prev = window[start - 1];
        if (end.timestamp_ms - prev.timestamp_ms > spec.max_duration) break;
        const double step = dir * (window[start].angle - prev.angle);
        if (step < 0.0) break;
        const double dt = window[start].timestamp_ms - prev.timestamp_ms;
        if (dt > 0.0) peak = std::max(peak, step / dt * 1000.0);
        --start;
    }
    if (dir * (end.angle - window[start].angle) < spec.min_sweep) return std::nullopt;
    return GestureEvent{hand, spec.kind, end.timestamp_ms, dir * peak};
}

std::optional<GestureEvent> GestureDetector::push(double timestamp_ms, double flexion_extension) {
    if (!samples_.empty() && timestamp_ms <= samples_.back().timestamp_ms)
        throw Error(ErrorCode::InvalidArgument, "gesture samples must have increasing timestamps");
    samples_.push_back({timestamp_ms, flexion_extension});
    while (samples_.size() > 1 &&
           timestamp_ms - samples_.front().timestamp_ms > spec_.max_duration)
        samples_.pop_front();

    // deque is not contiguous; copy the (short) window.
    thread_local std::vector<AngleSample> scratch;
    scratch.assign(samples_.begin(), samples_.end());
    auto event = detect_gesture(scratch, spec_, hand_, last_event_ms_);
    if (event) last_event_ms_ = event->timestamp_ms;
    return event;
}

void GestureDetector::reset() { samples_.clear(); }

std::string_view to_string(DistanceStatus status) {
    switch (status) {
        case DistanceStatus::Ok: return "Ok";
        case DistanceStatus::TooClose: return "TooClose";
        case DistanceStatus::TooFar: return "TooFar";
    }
    return "Ok";
}

std::optional<DistanceStatus> distance_status_from_string(std::string_view text) {
    if (text == "Ok") return DistanceStatus::Ok;
    if (text == "TooClose") return DistanceStatus::TooClose;
    if (text == "TooFar") return DistanceStatus::TooFar;
    return std::nullopt;
}

DistanceStatus hand_distance_status(const Vec3& left_palm, const Vec3& right_palm,
                                    const DistanceBand& band) {
    if (!(band.min_cm < band.max_cm))
        throw Error(ErrorCode::InvalidArgument, "distance band requires min < max");
    const double d = distance(left_palm, right_palm);
    if (d < band.min_cm) return DistanceStatus::TooClose;
    if (d > band.max_cm) return DistanceStatus::TooFar;
    return DistanceStatus::Ok;
}

std::set<FrameWarning> frame_quality(const HandFrame& frame) {
    std::set<FrameWarning> warnings;
    for (Hand h : kBothHands) {
        const auto& pose = frame.hands[h];
        if (!pose) continue;
        const Vec3& p = pose->palm_position;
        const double off_axis = std::atan2(std::hypot(p.x, p.z), p.y) * kRadToDeg;
        if (off_axis > kFieldOfViewDeg / 2.0) warnings.insert(FrameWarning::FovWarning);
        if (p.y < kMinPalmHeightCm) warnings.insert(FrameWarning::ProximityWarning);
    }
    return warnings;
}

}  // namespace wr
