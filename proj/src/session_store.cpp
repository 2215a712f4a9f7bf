#include "wristrehab/session_store.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>

#include "json_util.hpp"
#include "wristrehab/codec.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/fileio.hpp"
#include "wristrehab/input_sources.hpp"

namespace wr {

using detail::ObjectReader;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void corrupt(const std::string& what) {
    throw Error(ErrorCode::DigestMismatch, "session integrity check failed: " + what);
}

json header_to_json(const SessionHeader& h) {
    return {
        {"type", "header"},
        {"schema_version", SessionHeader::kSchemaVersion},
        {"session_id", h.session_id},
        {"patient_id", h.patient_id},
        {"game_kind", to_string(h.kind)},
        {"mode", to_string(h.mode)},
        {"level_digest", h.level_digest},
        {"profile_digest", h.profile_digest},
        {"level", level_to_json(h.level)},
        {"profile", profile_to_json(h.profile)},
        {"calibration", calibration_to_json(h.engine.calibration)},
        {"engine",
         {{"version", h.engine_version},
          {"tick_ms", h.engine.tick_ms},
          {"smoothing_alpha", h.engine.smoothing_alpha},
          {"digest_interval", h.engine.digest_interval}}},
        {"start_wall_clock", h.start_wall_clock},
    };
}

SessionHeader header_from_json(const json& doc) {
    ObjectReader r(doc, "header");
    if (r.string("type") != "header") detail::parse_fail(r.path_of("type"), "expected \"header\"");
    const auto version = r.integer("schema_version");
    if (version != SessionHeader::kSchemaVersion)
        detail::parse_fail(r.path_of("schema_version"), "unsupported version " + std::to_string(version));
    SessionHeader h;
    h.session_id = r.string("session_id");
    h.patient_id = r.string("patient_id");
    const auto kind = r.string("game_kind");
    if (auto k = game_kind_from_string(kind)) h.kind = *k;
    else detail::parse_fail(r.path_of("game_kind"), "unknown game kind '" + kind + "'");
    const auto mode = r.string("mode");
    if (auto m = game_mode_from_string(mode)) h.mode = *m;
    else detail::parse_fail(r.path_of("mode"), "unknown mode '" + mode + "'");
    h.level_digest = r.string("level_digest");
    h.profile_digest = r.string("profile_digest");
    h.level = level_from_json(r.required("level"), r.path_of("level"));
    h.profile = profile_from_json(r.required("profile"), r.path_of("profile"));
    h.engine.calibration = calibration_from_json(r.required("calibration"), r.path_of("calibration"));
    {
        ObjectReader e(r.required("engine"), r.path_of("engine"));
        h.engine_version = e.string("version");
        h.engine.tick_ms = e.integer("tick_ms");
        h.engine.smoothing_alpha = e.number("smoothing_alpha");
        h.engine.digest_interval = static_cast<int>(e.integer("digest_interval"));
        e.finish();
    }
    h.start_wall_clock = r.string("start_wall_clock");
    r.finish();
    return h;
}

json footer_to_json(const SessionFooter& f, bool with_digest) {
    json j{{"type", "footer"},
           {"entry_count", f.entry_count},
           {"final_score", f.final_score},
           {"status", status_to_json(f.status)},
           {"elapsed_ms", f.elapsed_ms}};
    if (with_digest) j["digest"] = f.digest;
    return j;
}

SessionFooter footer_from_json(const json& doc) {
    ObjectReader r(doc, "footer");
    if (r.string("type") != "footer") detail::parse_fail(r.path_of("type"), "expected \"footer\"");
    SessionFooter f;
    f.entry_count = r.unsigned_integer("entry_count");
    f.final_score = r.integer("final_score");
    f.status = status_from_json(r.required("status"), r.path_of("status"));
    f.elapsed_ms = r.integer("elapsed_ms");
    f.digest = r.string("digest");
    r.finish();
    return f;
}

std::string line_of(const json& j) { return detail::canonical(j) + "\n"; }

std::string footer_digest(const Sha256& prefix, const SessionFooter& f) {
    Sha256 h = prefix;
    h.update(detail::canonical(footer_to_json(f, false)));
    return h.hex();
}

std::int64_t tick_of(const SessionEntry& e, std::int64_t tick_ms) {
    if (const auto* t = std::get_if<TickDigestEntry>(&e)) return t->tick;
    return static_cast<std::int64_t>(std::ceil(entry_timestamp(e) / static_cast<double>(tick_ms)));
}

std::string describe_entry(const SessionEntry& e) { return detail::canonical(entry_to_json(e)); }

bool external_stop(StopReason r) {
    return r == StopReason::UserStop || r == StopReason::Disconnected || r == StopReason::SessionCap ||
           r == StopReason::SourceEnded;
}

}  // namespace

json entry_to_json(const SessionEntry& entry) {
    return std::visit(Overloaded{
                          [](const FrameEntry& f) {
                              return json{{"type", "frame"},
                                          {"timestamp", f.frame.timestamp_ms},
                                          {"frame", frame_to_json(f.frame)},
                                          {"angles", angles_to_json(f.angles)}};
                          },
                          [](const EventEntry& e) {
                              json j = event_to_json(e.event);
                              j["type"] = "event";
                              return j;
                          },
                          [](const TickDigestEntry& t) {
                              return json{{"type", "tick"},
                                          {"tick", t.tick},
                                          {"timestamp", t.timestamp_ms},
                                          {"hash", t.hash}};
                          },
                      },
                      entry);
}

SessionEntry entry_from_json(const json& doc, const std::string& path) {
    if (!doc.is_object()) detail::parse_fail(path, "expected an object");
    auto type_it = doc.find("type");
    if (type_it == doc.end() || !type_it->is_string()) detail::parse_fail(path + ".type", "missing entry type");
    const std::string type = type_it->get<std::string>();
    if (type == "event") {
        json copy = doc;
        copy.erase("type");
        return EventEntry{event_from_json(copy, path)};
    }
    ObjectReader r(doc, path);
    r.string("type");
    if (type == "frame") {
        FrameEntry f;
        const double ts = r.number("timestamp");
        f.frame = frame_from_json(r.required("frame"), r.path_of("frame"));
        f.angles = angles_from_json(r.required("angles"), r.path_of("angles"));
        if (ts != f.frame.timestamp_ms) detail::parse_fail(r.path_of("timestamp"), "differs from frame.timestamp");
        r.finish();
        return f;
    }
    if (type == "tick") {
        TickDigestEntry t;
        t.tick = r.integer("tick");
        t.timestamp_ms = r.integer("timestamp");
        t.hash = r.string("hash");
        r.finish();
        return t;
    }
    detail::parse_fail(r.path_of("type"), "unknown entry type '" + type + "'");
}

SessionHeader make_header(std::string session_id, GameKind kind, GameMode mode, const Level& level,
                          const PatientProfile& profile, EngineConfig engine, std::string start_wall_clock) {
    SessionHeader h;
    h.session_id = std::move(session_id);
    h.patient_id = profile.patient_id;
    h.kind = kind;
    h.mode = mode;
    h.level = level;
    h.profile = profile;
    h.level_digest = sha256_hex(save_level(level));
    h.profile_digest = sha256_hex(save_profile(profile));
    h.engine = std::move(engine);
    h.start_wall_clock = std::move(start_wall_clock);
    return h;
}

std::string utc_now_iso8601() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// Recorder

SessionRecorder::SessionRecorder(SessionHeader header, std::optional<std::string> path) : path_(std::move(path)) {
    record_.header = std::move(header);
    if (path_) {
        const std::filesystem::path p(*path_ + ".partial");
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        file_.open(p, std::ios::binary | std::ios::trunc);
        if (!file_) throw Error(ErrorCode::Io, "cannot open " + p.string() + " for writing");
    }
    append_line(line_of(header_to_json(record_.header)));
}

void SessionRecorder::append_line(const std::string& line) {
    bytes_ += line;
    hasher_.update(line);
    if (file_.is_open()) {
        file_.write(line.data(), static_cast<std::streamsize>(line.size()));
        file_.flush();
        if (!file_) throw Error(ErrorCode::Io, "write failed for " + *path_ + ".partial");
    }
}

void SessionRecorder::record(const SessionEntry& entry) {
    if (finalized_) throw Error(ErrorCode::OutOfOrderEntry, "session already finalized");
    const double ts = entry_timestamp(entry);
    if (!std::isfinite(ts)) throw Error(ErrorCode::OutOfOrderEntry, "entry timestamp is not finite");
    if (last_ts_ && ts < *last_ts_)
        throw Error(ErrorCode::OutOfOrderEntry,
                    fmt::format("entry at {} ms precedes previous entry at {} ms", ts, *last_ts_));
    append_line(line_of(entry_to_json(entry)));
    record_.entries.push_back(entry);
    last_ts_ = ts;
}

void SessionRecorder::record_all(std::span<const SessionEntry> entries) {
    for (const auto& e : entries) record(e);
}

SessionRecord SessionRecorder::finalize(const GameStatus& status, std::int64_t final_score, std::int64_t elapsed_ms) {
    if (finalized_) throw Error(ErrorCode::OutOfOrderEntry, "session already finalized");
    SessionFooter& f = record_.footer;
    f.entry_count = record_.entries.size();
    f.final_score = final_score;
    f.status = status;
    f.elapsed_ms = elapsed_ms;
    f.digest = footer_digest(hasher_, f);
    const std::string line = line_of(footer_to_json(f, true));
    bytes_ += line;
    if (file_.is_open()) {
        file_.write(line.data(), static_cast<std::streamsize>(line.size()));
        file_.close();
        if (!file_) throw Error(ErrorCode::Io, "write failed for " + *path_ + ".partial");
        std::error_code ec;
        std::filesystem::rename(*path_ + ".partial", *path_, ec);
        if (ec) throw Error(ErrorCode::Io, "cannot rename into " + *path_ + ": " + ec.message());
    }
    finalized_ = true;
    return record_;
}

// ---------------------------------------------------------------------------
// Driving a whole session

SessionRun run_session(const SessionSetup& setup, FrameSource& source, std::optional<std::string> out_path) {
    auto level = std::make_shared<const Level>(setup.level);
    auto profile = std::make_shared<const PatientProfile>(setup.profile);
    SessionEngine engine(new_game(setup.kind, setup.mode, level, profile), setup.engine);
    SessionRecorder recorder(make_header(setup.session_id, setup.kind, setup.mode, setup.level, setup.profile,
                                         setup.engine, setup.start_wall_clock),
                             std::move(out_path));
    while (engine.running()) {
        auto frame = source.next_frame();
        if (!frame) {
            recorder.record_all(engine.stop(StopReason::SourceEnded));
            break;
        }
        recorder.record_all(engine.push_frame(*frame));
    }
    const GameState& s = engine.state();
    SessionRun run;
    run.record = recorder.finalize(s.status, s.score, s.elapsed_ms);
    run.bytes = recorder.bytes();
    return run;
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_session(const SessionRecord& record) {
    std::string out = line_of(header_to_json(record.header));
    for (const auto& e : record.entries) out += line_of(entry_to_json(e));
    SessionFooter f = record.footer;
    f.entry_count = record.entries.size();
    Sha256 h;
    h.update(out);
    f.digest = footer_digest(h, f);
    out += line_of(footer_to_json(f, true));
    return out;
}

SessionRecord parse_session(std::string_view bytes) {
    if (bytes.empty() || bytes.back() != '\n') corrupt("file does not end with a complete footer line");
    const std::size_t body_end = bytes.find_last_of('\n', bytes.size() - 2);
    if (body_end == std::string_view::npos) corrupt("missing header or footer");
    const std::string_view prefix = bytes.substr(0, body_end + 1);
    const std::string_view footer_text = bytes.substr(body_end + 1, bytes.size() - body_end - 2);

    SessionFooter footer;
    try {
        const json fj = json::parse(footer_text);
        if (detail::canonical(fj) != footer_text) corrupt("footer is not canonical");
        footer = footer_from_json(fj);
    } catch (const json::exception&) {
        corrupt("footer unreadable");
    } catch (const Error& e) {
        if (e.code() == ErrorCode::DigestMismatch) throw;
        corrupt("footer unreadable");
    }
    Sha256 h;
    h.update(prefix);
    if (footer_digest(h, footer) != footer.digest) corrupt("digest mismatch");

    SessionRecord record;
    record.footer = footer;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < prefix.size()) {
        const std::size_t nl = prefix.find('\n', pos);
        const std::string_view line = prefix.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        const json doc = detail::parse_document(line);
        if (line_no == 1) record.header = header_from_json(doc);
        else record.entries.push_back(entry_from_json(doc, "line " + std::to_string(line_no)));
    }
    if (line_no == 0) detail::parse_fail("header", "missing");
    if (record.entries.size() != footer.entry_count)
        detail::parse_fail("footer.entry_count", fmt::format("says {} but body has {} entries", footer.entry_count,
                                                             record.entries.size()));
    if (sha256_hex(save_level(record.header.level)) != record.header.level_digest)
        corrupt("embedded level does not match level_digest");
    if (sha256_hex(save_profile(record.header.profile)) != record.header.profile_digest)
        corrupt("embedded profile does not match profile_digest");
    return record;
}

SessionRecord read_session_file(const std::string& path) { return parse_session(read_text_file(path)); }

RecoveredSession recover_session(std::string_view bytes) {
    RecoveredSession out;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) break;
        const std::string_view line = bytes.substr(pos, nl - pos);
        try {
            const json doc = json::parse(line);
            if (!out.header) {
                out.header = header_from_json(doc);
            } else if (doc.is_object() && doc.value("type", "") == "footer") {
                out.footer = footer_from_json(doc);
            } else {
                if (out.footer) break;  // nothing may follow a footer
                out.entries.push_back(entry_from_json(doc, "entry"));
            }
        } catch (const std::exception&) {
            break;
        }
        pos = nl + 1;
        out.bytes_used = pos;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Replay

ReplayReport replay(const SessionRecord& record, const std::function<void(const ReplayStep&)>& on_tick) {
    const SessionHeader& h = record.header;
    auto level = std::make_shared<const Level>(h.level);
    auto profile = std::make_shared<const PatientProfile>(h.profile);
    SessionEngine engine(new_game(h.kind, h.mode, level, profile), h.engine);

    ReplayReport report{engine.state(), {}, 0, 0};
    SessionEngine::TickObserver observer;
    if (on_tick) {
        observer = [&](const GameState& s, std::span<const GameEvent> ev) { on_tick(ReplayStep{s, ev}); };
    }

    const auto& recorded = record.entries;
    std::size_t cursor = 0;
    auto diverge = [&](const SessionEntry& at, const std::string& what) -> void {
        std::string msg = fmt::format("replay diverged at tick {}: {}", tick_of(at, h.engine.tick_ms), what);
        if (h.engine_version != kEngineVersion)
            msg += fmt::format(" (recorded by {}, replayed by {})", h.engine_version, kEngineVersion);
        throw Error(ErrorCode::ReplayDivergence, msg);
    };
    auto check = [&](const std::vector<SessionEntry>& produced) {
        for (const auto& e : produced) {
            if (cursor >= recorded.size()) diverge(e, "replay produced extra entry " + describe_entry(e));
            if (!(recorded[cursor] == e))
                diverge(recorded[cursor], "recorded " + describe_entry(recorded[cursor]) + ", replayed " +
                                              describe_entry(e));
            if (const auto* ev = std::get_if<EventEntry>(&e)) report.events.push_back(ev->event);
            if (std::holds_alternative<TickDigestEntry>(e)) ++report.digests_checked;
            ++cursor;
        }
    };

    for (std::size_t i = 0; i < recorded.size(); ++i) {
        const auto* f = std::get_if<FrameEntry>(&recorded[i]);
        if (!f || i < cursor) continue;
        if (!engine.running()) diverge(recorded[i], "recorded frames continue after the game ended");
        check(engine.push_frame(f->frame, observer));
    }
    // A frame that ended the game is not recorded; its ticks still are.
    if (engine.running() && cursor < recorded.size())
        check(engine.advance_to(entry_timestamp(recorded.back()), observer));
    const GameStatus& final_status = record.footer.status;
    if (engine.running() && final_status.state == RunState::Stopped && external_stop(final_status.reason))
        check(engine.stop(final_status.reason));

    const SessionEntry end_marker = EventEntry{GameEvent{engine.state().elapsed_ms, FinishedEvent{}}};
    if (cursor != recorded.size())
        diverge(recorded[cursor], "recorded entry not reproduced: " + describe_entry(recorded[cursor]));
    if (engine.state().status != final_status)
        diverge(end_marker, "final status differs: recorded " + detail::canonical(status_to_json(final_status)) +
                                ", replayed " + detail::canonical(status_to_json(engine.state().status)));
    if (engine.state().score != record.footer.final_score)
        diverge(end_marker, fmt::format("final score differs: recorded {}, replayed {}", record.footer.final_score,
                                        engine.state().score));
    if (engine.state().elapsed_ms != record.footer.elapsed_ms)
        diverge(end_marker, fmt::format("elapsed differs: recorded {} ms, replayed {} ms", record.footer.elapsed_ms,
                                        engine.state().elapsed_ms));

    report.final_state = engine.state();
    report.ticks = static_cast<std::uint64_t>(engine.state().tick);
    return report;
}

ReplayReport verify_session_bytes(std::string_view bytes) { return replay(parse_session(bytes)); }

// ---------------------------------------------------------------------------
// Analysis

std::string_view to_string(AngleChannel c) {
    switch (c) {
        case AngleChannel::FlexionExtensionLeft: return "flexion_extension_left";
        case AngleChannel::FlexionExtensionRight: return "flexion_extension_right";
        case AngleChannel::DeviationLeft: return "deviation_left";
        case AngleChannel::DeviationRight: return "deviation_right";
    }
    return "flexion_extension_right";
}

AngleChannel angle_channel_from_string(std::string_view text) {
    for (auto c : kAngleChannels)
        if (to_string(c) == text) return c;
    throw Error(ErrorCode::UnknownChannel,
                "unknown channel '" + std::string(text) +
                    "' (expected flexion_extension_left|flexion_extension_right|deviation_left|deviation_right)");
}

std::optional<double> channel_value(const WristAngles& angles, AngleChannel c) {
    const bool left = c == AngleChannel::FlexionExtensionLeft || c == AngleChannel::DeviationLeft;
    const auto& a = left ? angles.left : angles.right;
    if (!a) return std::nullopt;
    const bool fe = c == AngleChannel::FlexionExtensionLeft || c == AngleChannel::FlexionExtensionRight;
    return fe ? a->flexion_extension : a->deviation;
}

std::size_t histogram_bin(double angle_deg) {
    const double clamped = std::clamp(angle_deg, -kMaxAngle, kMaxAngle);
    const auto bin = static_cast<std::size_t>(std::floor((clamped + kMaxAngle) / kHistogramBinDeg));
    return std::min(bin, kHistogramBins - 1);
}

SessionStats statistics(const SessionRecord& record) {
    SessionStats st;
    st.duration_s = static_cast<double>(record.footer.elapsed_ms) / 1000.0;
    st.score = record.footer.final_score;
    for (const auto& entry : record.entries) {
        if (const auto* f = std::get_if<FrameEntry>(&entry)) {
            ++st.frame_count;
            for (std::size_t c = 0; c < kAngleChannels.size(); ++c) {
                const auto v = channel_value(f->angles, kAngleChannels[c]);
                if (!v) continue;
                ChannelStats& cs = st.channels[c];
                cs.max = cs.max ? std::max(*cs.max, *v) : *v;
                cs.min = cs.min ? std::min(*cs.min, *v) : *v;
                ++cs.samples;
                ++cs.histogram[histogram_bin(*v)];
            }
        } else if (const auto* e = std::get_if<EventEntry>(&entry)) {
            std::visit(Overloaded{
                           [&](const GestureUsedEvent&) { ++st.gesture_count; },
                           [&](const AdaptedEvent&) { ++st.adaptation_events; },
                           [&](const SafetyStopEvent&) { ++st.safety_stops; },
                           [&](const auto&) {},
                       },
                       e->event.data);
            if (auto o = event_outcome(e->event)) ++(is_success(*o) ? st.hits : st.misses);
        }
    }
    return st;
}

std::string export_timeseries(const SessionRecord& record, AngleChannel channel) {
    std::string out = "timestamp_ms,angle_deg\n";
    for (const auto& entry : record.entries) {
        const auto* f = std::get_if<FrameEntry>(&entry);
        if (!f) continue;
        const auto v = channel_value(f->angles, channel);
        if (!v) continue;
        std::string angle = fmt::format("{:.2f}", *v);
        if (angle == "-0.00") angle = "0.00";
        out += fmt::format("{},{}\n", f->frame.timestamp_ms, angle);
    }
    return out;
}

}  // namespace wr

namespace wr {

json stats_to_json(const SessionStats& stats) {
    json channels = json::object();
    for (std::size_t i = 0; i < kAngleChannels.size(); ++i) {
        const ChannelStats& c = stats.channels[i];
        channels[std::string(to_string(kAngleChannels[i]))] = {
            {"max", c.max ? json(*c.max) : json(nullptr)},
            {"min", c.min ? json(*c.min) : json(nullptr)},
            {"samples", c.samples},
            {"histogram", c.histogram},
        };
    }
    return {
        {"duration_s", stats.duration_s},
        {"frame_count", stats.frame_count},
        {"channels", channels},
        {"histogram_bin_deg", kHistogramBinDeg},
        {"gesture_count", stats.gesture_count},
        {"hits", stats.hits},
        {"misses", stats.misses},
        {"score", stats.score},
        {"adaptation_events", stats.adaptation_events},
        {"safety_stops", stats.safety_stops},
    };
}

json session_summary_json(const SessionRecord& record) {
    const SessionHeader& h = record.header;
    return {
        {"session_id", h.session_id},
        {"patient_id", h.patient_id},
        {"game_kind", to_string(h.kind)},
        {"mode", to_string(h.mode)},
        {"start_wall_clock", h.start_wall_clock},
        {"status", status_to_json(record.footer.status)},
        {"final_score", record.footer.final_score},
        {"elapsed_ms", record.footer.elapsed_ms},
    };
}

}  // namespace wr
