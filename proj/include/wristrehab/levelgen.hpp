#pragma once

// Level model for the four games, validation against a patient profile,
// therapist editing, and seeded generation within therapist constraints.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wristrehab/kinematics.hpp"
#include "wristrehab/profiles.hpp"

namespace wr {

enum class GameKind : std::uint8_t { Rhythm, Flappy, Skiing, Plane };

std::string_view to_string(GameKind kind);
std::optional<GameKind> game_kind_from_string(std::string_view text);

struct RhythmNote {
    double time = 0.0;  // s
    Hand lane = Hand::Right;
    bool operator==(const RhythmNote&) const = default;
};

struct FlappyPipe {
    double time = 0.0;
    double gap_center = 0.5;  // 0 bottom .. 1 top
    double gap_height = 0.3;
    bool operator==(const FlappyPipe&) const = default;
};

struct SkiGate {
    double time = 0.0;
    double center = 0.0;  // -1 left .. +1 right
    double width = 0.3;   // full width
    bool operator==(const SkiGate&) const = default;
};

struct PlaneRing {
    double time = 0.0;
    double center_yaw = 0.0;
    double center_pitch = 0.0;
    double radius = 0.2;
    bool operator==(const PlaneRing&) const = default;
};

using Element = std::variant<RhythmNote, FlappyPipe, SkiGate, PlaneRing>;

double element_time(const Element& e);
GameKind element_kind(const Element& e);

struct GenConstraints {
    double duration = 60.0;  // s
    int element_count = 10;
    double rom_fraction = 1.0;
    double min_spacing = 1.0;  // s
    // Per-game extras; unset means the game default below.
    std::optional<Handedness> lanes;
    std::optional<double> gap_height;
    std::optional<double> gate_width;
    std::optional<double> ring_radius;

    bool operator==(const GenConstraints&) const = default;
};

inline constexpr double kDefaultGapHeight = 0.3;
inline constexpr double kDefaultGateWidth = 0.3;
inline constexpr double kDefaultRingRadius = 0.2;
/// Closest two consecutive elements may be for any level, in seconds.
inline constexpr double kMinHumanSpacing = 0.3;

struct ScoringRules {
    int note = 100;
    int gate = 50;
    int ring = 50;
    int pipe = 10;
    bool operator==(const ScoringRules&) const = default;
};

/// Starting difficulty scalars; adaptation only ever eases them.
struct LevelDifficulty {
    double hit_window_ms = 150.0;
    double speed = 1.0;             // track time per wall time
    double gravity = 1.6;           // flappy, height fractions / s^2
    double impulse_velocity = 0.7;  // flappy, height fractions / s
    bool operator==(const LevelDifficulty&) const = default;
};

struct Level {
    static constexpr int kSchemaVersion = 1;

    GameKind kind = GameKind::Rhythm;
    double duration = 0.0;  // s
    std::vector<Element> elements;
    std::optional<std::uint64_t> gen_seed;
    std::optional<GenConstraints> constraints_snapshot;
    std::optional<ScoringRules> scoring;
    std::optional<LevelDifficulty> difficulty;

    bool operator==(const Level&) const = default;
};

/// Every Level/element invariant plus ROM reachability for `profile`.
Violations validate_level(const Level& level, const PatientProfile& profile);

Violations validate_constraints(GameKind kind, const GenConstraints& constraints);

/// Deterministic for identical inputs. Throws InfeasibleConstraints when
/// the elements cannot be spaced within the duration (or the position band
/// is empty), InvalidConstraints for malformed constraints or profile.
Level generate_level(GameKind kind, const GenConstraints& constraints,
                     const PatientProfile& profile, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Authoring

struct AddElement {
    Element element;
};
struct MoveElement {
    std::size_t index = 0;
    double time = 0.0;
};
struct ReplaceElement {
    std::size_t index = 0;
    Element element;
};
struct DeleteElement {
    std::size_t index = 0;
};
struct SetDuration {
    double duration = 0.0;
};

using LevelEdit = std::variant<AddElement, MoveElement, ReplaceElement, DeleteElement, SetDuration>;

/// Applies edits in order to an empty level. Results are not repaired;
/// run validate_level on them. Throws IndexOutOfRange, or InvalidArgument
/// for an element of another game.
Level author_level(GameKind kind, const std::vector<LevelEdit>& edits);
Level apply_edits(Level level, const std::vector<LevelEdit>& edits);

/// A therapist's edit list: {"game_kind": ..., "edits": [{"op": ...}, ...]}.
struct LevelScript {
    GameKind kind = GameKind::Rhythm;
    std::vector<LevelEdit> edits;
};

LevelScript load_level_script(std::string_view document);

Level load_level(std::string_view document);
std::string save_level(const Level& level);
Level read_level_file(const std::string& path);

}  // namespace wr
