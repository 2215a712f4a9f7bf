#pragma once

// Frame-driven session loop shared by live play, the service and replay:
// frames in, fixed-timestep ticks and log entries out.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wristrehab/gamecore.hpp"
#include "wristrehab/kinematics.hpp"

namespace wr {

/// Bumped whenever a change could alter ticks, events or state hashes.
inline constexpr std::string_view kEngineVersion = "wristrehab-engine/1";
inline constexpr int kDefaultDigestInterval = 100;

struct EngineConfig {
    NeutralPose calibration;
    double smoothing_alpha = kDefaultSmoothingAlpha;
    std::int64_t tick_ms = kTickMs;
    int digest_interval = kDefaultDigestInterval;  // ticks between state hashes

    bool operator==(const EngineConfig&) const = default;
};

/// Raw frame plus its calibrated, unsmoothed angles.
struct FrameEntry {
    HandFrame frame;
    WristAngles angles;
    bool operator==(const FrameEntry&) const = default;
};

struct EventEntry {
    GameEvent event;
    bool operator==(const EventEntry&) const = default;
};

struct TickDigestEntry {
    std::int64_t tick = 0;
    std::int64_t timestamp_ms = 0;
    std::string hash;
    bool operator==(const TickDigestEntry&) const = default;
};

using SessionEntry = std::variant<FrameEntry, EventEntry, TickDigestEntry>;

double entry_timestamp(const SessionEntry& entry);

class SessionEngine {
public:
    using TickObserver = std::function<void(const GameState&, std::span<const GameEvent>)>;

    SessionEngine(GameState initial, EngineConfig config);

    /// Runs every tick that ends at or before the frame's timestamp on the
    /// previously held input, then ingests the frame. A malformed or
    /// out-of-order frame throws (MalformedFrame, OutOfOrderEntry) and leaves
    /// the engine untouched. Frames after the game ended are ignored.
    std::vector<SessionEntry> push_frame(const HandFrame& frame, const TickObserver& observer = {});

    /// Runs the ticks that end at or before `t_ms` on the held input without
    /// ingesting anything. Replay uses it for the ticks a final, unrecorded
    /// frame set off after which the game ended.
    std::vector<SessionEntry> advance_to(double t_ms, const TickObserver& observer = {});

    /// Imposes an external stop; empty if the game already ended. The event is
    /// stamped no earlier than the last ingested frame.
    std::vector<SessionEntry> stop(StopReason reason);

    const GameState& state() const { return state_; }
    bool running() const { return state_.status.state == RunState::Running; }
    const EngineConfig& config() const { return config_; }

private:
    void run_tick(std::vector<SessionEntry>& out, const TickObserver& observer);

    GameState state_;
    EngineConfig config_;
    WristAngles smoothed_;
    PerHand<Vec3> palms_;
    std::vector<GestureDetector> detectors_;
    std::vector<GestureEvent> pending_gestures_;
    std::optional<double> last_frame_ms_;
};

}  // namespace wr
