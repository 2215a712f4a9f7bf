#pragma once

// Session records (.wrsession): recording, integrity, replay, statistics
// and time-series export.
//
// File layout, one canonical JSON object per line:
//   line 1      {"type":"header", ...}
//   lines 2..   {"type":"frame"|"event"|"tick", ...}
//   last line   {"type":"footer", ..., "digest": <sha256 hex>}
// The footer digest covers every byte before the footer line followed by
// the canonical footer line without its "digest" field.

#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wristrehab/codec.hpp"
#include "wristrehab/digest.hpp"
#include "wristrehab/engine.hpp"
#include "wristrehab/gamecore.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/profiles.hpp"

namespace wr {

struct SessionHeader {
    static constexpr int kSchemaVersion = 1;

    std::string session_id;
    std::string patient_id;
    GameKind kind = GameKind::Rhythm;
    GameMode mode = GameMode::Standard;
    std::string level_digest;    // sha256 of save_level(level)
    std::string profile_digest;  // sha256 of save_profile(profile)
    Level level;
    PatientProfile profile;
    std::string engine_version{kEngineVersion};
    EngineConfig engine;
    std::string start_wall_clock;  // ISO-8601 UTC; informational only

    bool operator==(const SessionHeader&) const = default;
};

/// Fills ids, digests and the embedded level/profile.
SessionHeader make_header(std::string session_id, GameKind kind, GameMode mode, const Level& level,
                          const PatientProfile& profile, EngineConfig engine, std::string start_wall_clock);

struct SessionFooter {
    std::uint64_t entry_count = 0;
    std::int64_t final_score = 0;
    GameStatus status;
    std::int64_t elapsed_ms = 0;
    std::string digest;

    bool operator==(const SessionFooter&) const = default;
};

struct SessionRecord {
    SessionHeader header;
    std::vector<SessionEntry> entries;
    SessionFooter footer;

    bool operator==(const SessionRecord&) const = default;
};

/// Current UTC time as ISO-8601 with seconds.
std::string utc_now_iso8601();

// ---------------------------------------------------------------------------
// Recording

/// Append-only writer. Every record() is serialized and, when a path is
/// given, flushed to `<path>.partial` immediately, so a crash leaves a
/// recoverable prefix. finalize() appends the footer and renames the file
/// into place.
class SessionRecorder {
public:
    explicit SessionRecorder(SessionHeader header, std::optional<std::string> path = std::nullopt);

    /// Throws OutOfOrderEntry if the entry is older than the previous one,
    /// or if called after finalize.
    void record(const SessionEntry& entry);
    void record_all(std::span<const SessionEntry> entries);

    SessionRecord finalize(const GameStatus& status, std::int64_t final_score, std::int64_t elapsed_ms);

    /// Serialized bytes so far (header and entries; plus footer once final).
    const std::string& bytes() const { return bytes_; }
    std::uint64_t entry_count() const { return record_.entries.size(); }
    bool finalized() const { return finalized_; }

private:
    void append_line(const std::string& line);

    SessionRecord record_;
    std::string bytes_;
    Sha256 hasher_;
    std::optional<std::string> path_;
    std::ofstream file_;
    std::optional<double> last_ts_;
    bool finalized_ = false;
};

// ---------------------------------------------------------------------------
// Driving a whole session

class FrameSource;

struct SessionSetup {
    std::string session_id;
    GameKind kind = GameKind::Rhythm;
    GameMode mode = GameMode::Standard;
    Level level;
    PatientProfile profile;
    EngineConfig engine;
    std::string start_wall_clock;
};

struct SessionRun {
    SessionRecord record;
    std::string bytes;
};

/// Pulls frames until the game ends or the source does (then the game is
/// stopped with SourceEnded), recording everything. Throws InvalidLevel,
/// IllegalMode, ValidationFailed before any frame is read; frame errors
/// propagate.
SessionRun run_session(const SessionSetup& setup, FrameSource& source,
                       std::optional<std::string> out_path = std::nullopt);

// ---------------------------------------------------------------------------
// Serialization

/// One body line ({"type": "frame"|"event"|"tick", ...}) as JSON.
json entry_to_json(const SessionEntry& entry);
SessionEntry entry_from_json(const json& doc, const std::string& path = "entry");

std::string serialize_session(const SessionRecord& record);

/// Verifies the whole-file digest before parsing anything; any corruption
/// raises DigestMismatch. Schema problems in a file whose digest verifies
/// raise ParseError.
SessionRecord parse_session(std::string_view bytes);

SessionRecord read_session_file(const std::string& path);

/// What survives of a possibly truncated file: the header and every
/// complete (newline-terminated, parseable) entry before the cut.
struct RecoveredSession {
    std::optional<SessionHeader> header;
    std::vector<SessionEntry> entries;
    std::optional<SessionFooter> footer;  // present only if the file is whole
    std::size_t bytes_used = 0;
};

RecoveredSession recover_session(std::string_view bytes);

// ---------------------------------------------------------------------------
// Replay

struct ReplayStep {
    const GameState& state;
    std::span<const GameEvent> events;
};

struct ReplayReport {
    GameState final_state;
    std::vector<GameEvent> events;
    std::uint64_t ticks = 0;
    std::uint64_t digests_checked = 0;
};

/// Re-runs the engine from new_game over the recorded frames and checks
/// every regenerated entry against the record. Throws ReplayDivergence
/// naming the first divergent tick. `on_tick` sees every tick's state.
ReplayReport replay(const SessionRecord& record, const std::function<void(const ReplayStep&)>& on_tick = {});

/// Parse (with integrity check) and replay a file's bytes.
ReplayReport verify_session_bytes(std::string_view bytes);

// ---------------------------------------------------------------------------
// Analysis

inline constexpr double kHistogramBinDeg = 5.0;
inline constexpr std::size_t kHistogramBins = 36;  // -90 .. +90

enum class AngleChannel : std::uint8_t {
    FlexionExtensionLeft,
    FlexionExtensionRight,
    DeviationLeft,
    DeviationRight,
};

inline constexpr std::array<AngleChannel, 4> kAngleChannels{
    AngleChannel::FlexionExtensionLeft, AngleChannel::FlexionExtensionRight, AngleChannel::DeviationLeft,
    AngleChannel::DeviationRight};

std::string_view to_string(AngleChannel c);
/// Throws UnknownChannel.
AngleChannel angle_channel_from_string(std::string_view text);
std::optional<double> channel_value(const WristAngles& angles, AngleChannel c);

std::size_t histogram_bin(double angle_deg);

struct ChannelStats {
    std::optional<double> max;
    std::optional<double> min;
    std::uint64_t samples = 0;
    std::array<std::uint64_t, kHistogramBins> histogram{};

    bool operator==(const ChannelStats&) const = default;
};

struct SessionStats {
    double duration_s = 0.0;
    std::uint64_t frame_count = 0;
    std::array<ChannelStats, 4> channels{};  // indexed like kAngleChannels
    std::uint64_t gesture_count = 0;
    std::uint64_t hits = 0;    // Hit, GatePassed, RingPassed
    std::uint64_t misses = 0;  // Miss, Collision
    std::int64_t score = 0;
    std::uint64_t adaptation_events = 0;
    std::uint64_t safety_stops = 0;

    bool operator==(const SessionStats&) const = default;
};

SessionStats statistics(const SessionRecord& record);

json stats_to_json(const SessionStats& stats);

/// Catalog listing entry: ids, game, final status and score.
json session_summary_json(const SessionRecord& record);

/// `timestamp_ms,angle_deg` rows for every frame where the channel is present.
std::string export_timeseries(const SessionRecord& record, AngleChannel channel);

}  // namespace wr
