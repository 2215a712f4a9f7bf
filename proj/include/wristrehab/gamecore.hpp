#pragma once

// The four games as pure fixed-timestep transition functions:
// (state, wrist input, dt) -> (state', events). Identical inputs produce
// bitwise-identical outputs, which is what session replay relies on.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wristrehab/kinematics.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/profiles.hpp"

namespace wr {

// ---------------------------------------------------------------------------
// Angle -> avatar position mappings. Level generation and validation use the
// inverses, so these are the single authority on reachability.

/// -flexion_max -> 0, 0 -> 0.5, +extension_max -> 1, clamped.
double map_continuous_height(double flexion_extension, double flexion_max, double extension_max);

/// -rom_left -> -1, 0 -> 0, +rom_right -> +1, clamped.
double map_lateral(double angle, double rom_left, double rom_right);

double height_angle_for(double height, double flexion_max, double extension_max);
double lateral_angle_for(double lateral, double rom_left, double rom_right);

// ---------------------------------------------------------------------------

enum class GameMode : std::uint8_t {
    Standard,  // rhythm has a single scheme
    Impulse,
    Continuous,
    Deviation,
    RotatedFlexion,
    OneHand,
    TwoHands,
};

std::string_view to_string(GameMode mode);
std::optional<GameMode> game_mode_from_string(std::string_view text);
bool mode_allowed(GameKind kind, GameMode mode);
GameMode default_mode(GameKind kind);

inline constexpr std::int64_t kTickMs = 10;
inline constexpr std::int64_t kDropoutPauseMs = 500;

struct DifficultyScalars {
    double speed = 1.0;
    double hit_window_ms = 150.0;
    double extent_scale = 1.0;  // gaps, gates and rings
    double gravity = 1.6;
    double impulse_velocity = 0.7;

    bool operator==(const DifficultyScalars&) const = default;
};

enum class RunState : std::uint8_t { Running, Stopped, Finished };

enum class StopReason : std::uint8_t {
    None,
    SafetyStop,      // ROM exceeded beyond the grace period
    AdaptExhausted,  // easing ran out
    UserStop,
    Disconnected,
    SessionCap,      // wall-clock hard cap in the service
    SourceEnded,     // input stream ended before the level did
};

std::string_view to_string(RunState s);
std::string_view to_string(StopReason r);
std::optional<StopReason> stop_reason_from_string(std::string_view text);

struct GameStatus {
    RunState state = RunState::Running;
    StopReason reason = StopReason::None;
    std::string detail;  // e.g. the offending ROM channel

    bool operator==(const GameStatus&) const = default;
};

enum class Outcome : std::uint8_t { Hit, Miss, Collision, GatePassed, RingPassed };

std::string_view to_string(Outcome o);
inline bool is_success(Outcome o) {
    return o == Outcome::Hit || o == Outcome::GatePassed || o == Outcome::RingPassed;
}

enum class RomChannel : std::uint8_t { Extension, Flexion, DeviationLeft, DeviationRight };

std::string_view to_string(RomChannel c);

// ---------------------------------------------------------------------------
// Events

struct HitEvent { std::size_t element = 0; int points = 0; bool operator==(const HitEvent&) const = default; };
struct MissEvent { std::size_t element = 0; bool operator==(const MissEvent&) const = default; };
struct CollisionEvent { std::size_t element = 0; bool operator==(const CollisionEvent&) const = default; };
struct GatePassedEvent { std::size_t element = 0; int points = 0; bool operator==(const GatePassedEvent&) const = default; };
struct RingPassedEvent { std::size_t element = 0; int points = 0; bool operator==(const RingPassedEvent&) const = default; };
struct GestureUsedEvent {
    Hand hand = Hand::Right;
    GestureKind gesture = GestureKind::Press;
    bool operator==(const GestureUsedEvent&) const = default;
};
struct AdaptedEvent {
    DifficultyScalars scalars;
    int adaptation_count = 0;
    bool operator==(const AdaptedEvent&) const = default;
};
struct SafetyStopEvent {
    StopReason reason = StopReason::SafetyStop;
    std::string channel;  // "<hand>.<channel>" for ROM stops
    bool operator==(const SafetyStopEvent&) const = default;
};
struct DistanceWarningEvent {
    DistanceStatus status = DistanceStatus::Ok;
    bool operator==(const DistanceWarningEvent&) const = default;
};
struct FinishedEvent { std::int64_t final_score = 0; bool operator==(const FinishedEvent&) const = default; };
/// Externally imposed stop (user, disconnect, cap, end of input).
struct StoppedEvent { StopReason reason = StopReason::UserStop; bool operator==(const StoppedEvent&) const = default; };

using GameEventData = std::variant<HitEvent, MissEvent, CollisionEvent, GatePassedEvent, RingPassedEvent,
                                   GestureUsedEvent, AdaptedEvent, SafetyStopEvent, DistanceWarningEvent,
                                   FinishedEvent, StoppedEvent>;

struct GameEvent {
    std::int64_t timestamp_ms = 0;
    GameEventData data;

    bool operator==(const GameEvent&) const = default;
};

std::string_view event_name(const GameEvent& e);
std::optional<Outcome> event_outcome(const GameEvent& e);

// ---------------------------------------------------------------------------
// State

struct Avatar {
    std::array<double, 2> lane_press_ms{-1.0, -1.0};  // rhythm: last press, track time
    double y = 0.5;                                   // flappy height
    double vy = 0.0;                                  // flappy, fractions / s
    double x = 0.0;                                   // skier
    double yaw = 0.0;                                 // plane
    double pitch = 0.0;

    bool operator==(const Avatar&) const = default;
};

/// Recent element outcomes (true = miss), oldest first, bounded by capacity.
class PerfWindow {
public:
    explicit PerfWindow(int capacity = 5) : capacity_(capacity) {}

    void push(bool miss);
    void clear() { outcomes_.clear(); }
    bool full() const { return static_cast<int>(outcomes_.size()) >= capacity_; }
    int misses() const;
    int size() const { return static_cast<int>(outcomes_.size()); }
    int capacity() const { return capacity_; }
    const std::vector<bool>& outcomes() const { return outcomes_; }

    bool operator==(const PerfWindow&) const = default;

private:
    int capacity_;
    std::vector<bool> outcomes_;
};

struct GameState {
    GameKind kind = GameKind::Rhythm;
    GameMode mode = GameMode::Standard;
    std::shared_ptr<const Level> level;
    std::shared_ptr<const PatientProfile> profile;

    std::int64_t elapsed_ms = 0;
    std::int64_t tick = 0;
    double track_ms = 0.0;  // level clock: scaled by speed, paused on dropout

    Avatar avatar;
    std::size_t next_element_index = 0;  // first unresolved element
    std::vector<bool> resolved;
    std::uint8_t required_hands = 0;  // bit 0 left, bit 1 right

    std::int64_t score = 0;
    int adaptation_count = 0;
    DifficultyScalars scalars;
    PerfWindow perf;

    std::int64_t dropout_ms = 0;
    DistanceStatus distance = DistanceStatus::Ok;
    std::array<std::optional<std::int64_t>, 8> rom_violation_since{};  // [hand * 4 + channel]

    GameStatus status;
};

/// Throws InvalidLevel (level fails validate_level or mismatches kind),
/// IllegalMode, or ValidationFailed (profile invalid).
GameState new_game(GameKind kind, GameMode mode, std::shared_ptr<const Level> level,
                   std::shared_ptr<const PatientProfile> profile);

struct TickInput {
    WristAngles angles;        // smoothed
    PerHand<Vec3> palms;       // palm positions for the two-hand overlay
    std::vector<GestureEvent> gestures;
};

struct TickResult {
    GameState state;
    std::vector<GameEvent> events;
};

/// dt must be in (0, 100] ms. A state that is not Running is returned
/// unchanged with no events.
TickResult tick(const GameState& state, const TickInput& input, std::int64_t dt_ms);

/// Ends a running game from outside (user stop, disconnect, ...). Returns the
/// StoppedEvent, or nothing if the game was not running.
std::optional<GameEvent> stop_game(GameState& state, StopReason reason);

// Building blocks of tick, exposed for tests.

struct FlappyBody {
    double y = 0.5;
    double vy = 0.0;
};

/// One impulse-mode step: a flap sets vy to impulse_v; otherwise gravity
/// acts. Height integrates the mean velocity over the step, clamped to [0, 1].
FlappyBody flappy_impulse(FlappyBody body, bool flap, std::int64_t dt_ms, double gravity,
                          double impulse_velocity);

struct PlaneAttitude {
    double pitch = 0.0;  // -1 .. +1
    double yaw = 0.0;
    DistanceStatus distance_status = DistanceStatus::Ok;
};

/// Empty when the hands the mode needs are not tracked (dropout).
std::optional<PlaneAttitude> plane_attitude(const WristAngles& angles, const PerHand<Vec3>& palms,
                                            GameMode mode, const PatientProfile& profile);

/// Containment test for an element that is due. For rhythm notes,
/// `press_track_ms` is the press time on the note's lane (if any).
Outcome resolve_element(const Element& element, const Avatar& avatar, const DifficultyScalars& scalars,
                        std::optional<double> press_track_ms = std::nullopt);

/// Evaluates the performance window after an element resolution: eases the
/// challenge scalars or, once easing is exhausted, stops the game.
std::optional<GameEvent> adapt(GameState& state, const AdaptPolicy& policy);

/// ROM monitor: stops the game once any present channel has exceeded its
/// limit continuously for longer than the profile's grace period. `angles`
/// are taken to have held over the last `dt_ms` ending at state.elapsed_ms.
std::optional<GameEvent> safety_check(GameState& state, const WristAngles& angles,
                                      const PatientProfile& profile, std::int64_t dt_ms = kTickMs);

/// Hand driving single-hand games for this profile and input.
Hand primary_hand(const PatientProfile& profile, const WristAngles& angles);

/// SHA-256 (hex) of the canonical serialization of the dynamic state.
std::string state_digest(const GameState& state);

}  // namespace wr
