#pragma once

// Frame streams the engine pulls from: synthetic motion, recorded traces,
// a live device bridge, and a scripted "imperfect player" that chases a
// level's targets. The engine never sees where frames come from.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wristrehab/gamecore.hpp"
#include "wristrehab/kinematics.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/net.hpp"
#include "wristrehab/profiles.hpp"

namespace wr {

inline constexpr double kMinSourceRateHz = 30.0;
inline constexpr double kMaxSourceRateHz = 240.0;

class FrameSource {
public:
    virtual ~FrameSource() = default;

    /// Next frame, or empty at end of stream.
    virtual std::optional<HandFrame> next_frame() = 0;
    virtual double nominal_rate() const = 0;
};

// ---------------------------------------------------------------------------
// Kinematics inverse

struct HandOrientation {
    Vec3 hand_direction;
    Vec3 palm_normal;
};

/// Direction and palm normal whose wrist_angles (zero calibration) are
/// `angles`. Inputs are clamped to [-90, 90].
HandOrientation synth_inverse(const Angles& angles);

// ---------------------------------------------------------------------------
// Synthetic

struct Waveform {
    enum class Shape : std::uint8_t { Constant, Sine, Sweep };

    Shape shape = Shape::Constant;
    double a = 0.0;  // constant value | amplitude (deg) | sweep start (deg)
    double b = 0.0;  // frequency (Hz)                    | sweep end (deg)
    double c = 0.0;  // phase (deg)                       | sweep duration (s)

    static Waveform constant(double value) { return {Shape::Constant, value, 0.0, 0.0}; }
    static Waveform sine(double amplitude, double freq_hz, double phase_deg = 0.0) {
        return {Shape::Sine, amplitude, freq_hz, phase_deg};
    }
    /// Linear ramp, then holds the end value.
    static Waveform sweep(double from, double to, double duration_s) { return {Shape::Sweep, from, to, duration_s}; }

    double at(double t_s) const;

    bool operator==(const Waveform&) const = default;
};

struct Interval {
    double start_ms = 0.0;  // inclusive
    double end_ms = 0.0;    // exclusive
    bool operator==(const Interval&) const = default;
};

struct SyntheticHand {
    bool enabled = false;
    Waveform flexion_extension;
    Waveform deviation;
    std::vector<Interval> dropouts;  // hand absent inside these
    Vec3 palm_position;

    bool operator==(const SyntheticHand&) const = default;
};

struct SyntheticSpec {
    SyntheticHand left{false, {}, {}, {}, Vec3{-10.0, 20.0, 0.0}};
    SyntheticHand right{true, {}, {}, {}, Vec3{10.0, 20.0, 0.0}};
    double noise_amplitude = 0.0;  // Gaussian sigma, degrees
    std::uint64_t seed = 0;
    double rate_hz = 100.0;
    double duration_s = 600.0;

    SyntheticHand& operator[](Hand h) { return h == Hand::Left ? left : right; }
    const SyntheticHand& operator[](Hand h) const { return h == Hand::Left ? left : right; }

    bool operator==(const SyntheticSpec&) const = default;
};

/// Throws InvalidArgument for amplitudes above 90, frequencies outside
/// (0, 5], rates outside [30, 240] or malformed intervals.
void validate_synthetic(const SyntheticSpec& spec);

/// Source angle before noise and clamping.
Angles synthetic_angles(const SyntheticSpec& spec, Hand hand, double t_ms);

/// Frame `index` of the stream; a pure function of (spec, index).
HandFrame synthetic_frame(const SyntheticSpec& spec, std::uint64_t index);

/// Standard normal sample keyed by (seed, a, b, c), portable across runs.
double keyed_gaussian(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);

class SyntheticSource final : public FrameSource {
public:
    explicit SyntheticSource(SyntheticSpec spec);
    std::optional<HandFrame> next_frame() override;
    double nominal_rate() const override { return spec_.rate_hz; }

private:
    SyntheticSpec spec_;
    std::uint64_t index_ = 0;
    std::uint64_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Trace

/// Frames of a .wrsession file (or any file of frame lines), verbatim.
/// Throws TraceParseError naming the line on malformed content.
class TraceSource final : public FrameSource {
public:
    explicit TraceSource(const std::string& path);
    static TraceSource from_text(std::string_view text, const std::string& name = "<memory>");

    std::optional<HandFrame> next_frame() override;
    double nominal_rate() const override { return rate_; }
    std::size_t size() const { return frames_.size(); }

private:
    TraceSource() = default;
    void load(std::string_view text, const std::string& name);

    std::vector<HandFrame> frames_;
    std::size_t next_ = 0;
    double rate_ = 100.0;
};

// ---------------------------------------------------------------------------
// Bridge

/// Decodes one bridge line: a frame object, or a session frame entry.
/// Throws MalformedFrame.
HandFrame decode_bridge_line(std::string_view line);
std::string encode_bridge_line(const HandFrame& frame);

/// Newline-delimited JSON frames over TCP. Clean close at a line boundary
/// ends the stream; anything else raises BridgeDisconnected.
class BridgeSource final : public FrameSource {
public:
    BridgeSource(const std::string& host, std::uint16_t port, double nominal_rate = 100.0);
    explicit BridgeSource(net::TcpStream stream, double nominal_rate = 100.0);

    std::optional<HandFrame> next_frame() override;
    double nominal_rate() const override { return rate_; }

private:
    net::TcpStream stream_;
    double rate_;
};

// ---------------------------------------------------------------------------
// Imperfect player

/// A scripted patient who knows the level and aims for each element with
/// human-like error. Tracking games: cosine easing between targets with a
/// Gaussian aim error per target. Rhythm: a press is a quick flexion from a
/// rest pose followed by a slow recovery, started with timing jitter; a
/// press begun before recovery finishes sweeps less.
struct AutopilotSpec {
    std::uint64_t seed = 1;
    double rate_hz = 100.0;
    double aim_error = 0.08;         // sigma, avatar fraction
    double timing_jitter_ms = 60.0;  // sigma
    double noise_deg = 1.0;          // per-frame sigma
    double lead_ms = 90.0;           // press starts this early
    double rest_deg = 10.0;          // extension held between presses
    double press_depth_deg = -25.0;  // flexion reached by a press
    double press_ms = 120.0;
    double hold_ms = 50.0;
    double recovery_ms = 700.0;
    double tail_s = 2.0;  // frames continue this long after the level

    bool operator==(const AutopilotSpec&) const = default;
};

class AutopilotSource final : public FrameSource {
public:
    AutopilotSource(const Level& level, const PatientProfile& profile, GameMode mode, AutopilotSpec spec);

    std::optional<HandFrame> next_frame() override;
    double nominal_rate() const override { return spec_.rate_hz; }

    /// Intended (noise-free) angles at time t.
    WristAngles intended_angles(double t_ms) const;

private:
    struct Press {
        Hand hand;
        double start_ms;
    };
    struct Target {
        double time_ms;
        double primary;    // lateral, height or yaw fraction
        double secondary;  // plane pitch
    };

    double press_angle(Hand hand, double t_ms) const;
    std::pair<double, double> tracked(double t_ms) const;

    Level level_;
    PatientProfile profile_;
    GameMode mode_;
    AutopilotSpec spec_;
    std::vector<Press> presses_;
    std::vector<Target> targets_;
    std::uint8_t hands_ = 0;  // bit 0 left, bit 1 right
    std::uint64_t index_ = 0;
    std::uint64_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Source specs (CLI and service)

struct TraceSpec {
    std::string path;
    bool operator==(const TraceSpec&) const = default;
};
struct BridgeSpec {
    std::string host;
    std::uint16_t port = 0;
    bool operator==(const BridgeSpec&) const = default;
};

using SourceSpec = std::variant<SyntheticSpec, TraceSpec, BridgeSpec, AutopilotSpec>;

/// Grammar:
///   synthetic[:key=value,...]   keys: fe, dev, fe_left, fe_right, dev_left,
///       dev_right (const(v) | sine(A,f[,phase]) | sweep(from,to,dur)),
///       hands=left|right|both, noise, seed, rate, duration,
///       drop_left / drop_right = start-end[;start-end...] in ms, spread (cm)
///   trace:<path>
///   bridge:<host>:<port>
///   autopilot[:key=value,...]   keys: seed, rate, aim, jitter, noise, lead,
///       recovery, tail
/// Throws InvalidArgument.
SourceSpec parse_source_spec(std::string_view text);

/// Autopilot needs the session's level, profile and mode.
std::unique_ptr<FrameSource> make_source(const SourceSpec& spec, const Level& level, const PatientProfile& profile,
                                         GameMode mode);

}  // namespace wr
