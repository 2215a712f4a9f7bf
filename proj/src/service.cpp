#include "wristrehab/service.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "json_util.hpp"
#include "wristrehab/engine.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/fileio.hpp"
#include "wristrehab/input_sources.hpp"

namespace wr {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using namespace std::chrono_literals;

// ---------------------------------------------------------------------------
// Storage

Storage::Storage(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    for (const char* sub : {"profiles", "levels", "sessions"}) {
        fs::create_directories(root_ / sub, ec);
        if (ec) throw Error(ErrorCode::Io, fmt::format("cannot create {}: {}", (root_ / sub).string(), ec.message()));
    }
}

bool Storage::valid_id(std::string_view id) {
    if (id.empty() || id.size() > 128 || id.front() == '.') return false;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) return false;
    }
    return true;
}

static void require_id(std::string_view id, std::string_view what) {
    if (!Storage::valid_id(id)) throw Error(ErrorCode::InvalidArgument, fmt::format("invalid {} id '{}'", what, id));
}

void Storage::put_profile(const std::string& id, const PatientProfile& profile) {
    require_id(id, "profile");
    std::unique_lock lock(mutex_);
    write_file_atomic((root_ / "profiles" / (id + ".json")).string(), save_profile(profile));
}

std::optional<PatientProfile> Storage::get_profile(const std::string& id) const {
    if (!valid_id(id)) return std::nullopt;
    std::shared_lock lock(mutex_);
    const fs::path p = root_ / "profiles" / (id + ".json");
    if (!fs::exists(p)) return std::nullopt;
    return load_profile(read_text_file(p.string()));
}

std::vector<std::string> Storage::list_profiles() const { return list_ids(root_ / "profiles"); }

void Storage::put_level(const std::string& id, const Level& level) {
    require_id(id, "level");
    std::unique_lock lock(mutex_);
    write_file_atomic((root_ / "levels" / (id + ".json")).string(), save_level(level));
}

std::optional<Level> Storage::get_level(const std::string& id) const {
    if (!valid_id(id)) return std::nullopt;
    std::shared_lock lock(mutex_);
    const fs::path p = root_ / "levels" / (id + ".json");
    if (!fs::exists(p)) return std::nullopt;
    return load_level(read_text_file(p.string()));
}

std::vector<std::string> Storage::list_levels() const { return list_ids(root_ / "levels"); }

std::vector<std::string> Storage::list_ids(const fs::path& dir) const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> ids;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

fs::path Storage::session_path(const std::string& patient_id, const std::string& session_id) const {
    require_id(patient_id, "patient");
    require_id(session_id, "session");
    return root_ / "sessions" / patient_id / (session_id + ".wrsession");
}

std::vector<Storage::SessionInfo> Storage::list_sessions(const std::optional<std::string>& patient_id) const {
    std::shared_lock lock(mutex_);
    std::vector<SessionInfo> out;
    std::error_code ec;
    for (const auto& pdir : fs::directory_iterator(root_ / "sessions", ec)) {
        if (!pdir.is_directory()) continue;
        const std::string pid = pdir.path().filename().string();
        if (patient_id && pid != *patient_id) continue;
        std::error_code ec2;
        for (const auto& f : fs::directory_iterator(pdir.path(), ec2)) {
            if (f.is_regular_file() && f.path().extension() == ".wrsession")
                out.push_back({f.path().stem().string(), pid, f.path()});
        }
    }
    std::sort(out.begin(), out.end(), [](const SessionInfo& a, const SessionInfo& b) {
        return std::tie(a.patient_id, a.session_id) < std::tie(b.patient_id, b.session_id);
    });
    return out;
}

std::optional<Storage::SessionInfo> Storage::find_session(const std::string& session_id) const {
    if (!valid_id(session_id)) return std::nullopt;
    for (auto& info : list_sessions())
        if (info.session_id == session_id) return info;
    return std::nullopt;
}

std::optional<std::string> Storage::read_session_bytes(const std::string& session_id) const {
    auto info = find_session(session_id);
    if (!info) return std::nullopt;
    std::shared_lock lock(mutex_);
    return read_text_file(info->path.string());
}

fs::path resolve_storage_root(const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv(kStorageEnvVar); env && *env) return env;
    return "storage";
}

// ---------------------------------------------------------------------------
// Live sessions

namespace {

std::string random_session_id() {
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}() ^ static_cast<std::uint64_t>(Clock::now().time_since_epoch().count())};
    std::lock_guard lock(m);
    return fmt::format("s{:016x}", rng());
}

struct LiveSession {
    std::mutex m;
    std::string id;
    std::string patient_id;
    std::optional<SessionEngine> engine;
    std::optional<SessionRecorder> recorder;
    std::unique_ptr<FrameSource> source;  // null: the client feeds frames
    bool realtime = false;
    int snapshot_every = 1;
    bool started = false;  // first frame accepted
    bool done = false;
    bool attached = true;
    Clock::time_point created;
    Clock::time_point detached_at;
    Clock::duration cap{};
    std::optional<double> first_frame_ms;
};

std::string phase_of(const LiveSession& s) {
    if (!s.started && s.engine->running()) return "Lobby";
    return std::string(to_string(s.engine->state().status.state));
}

/// One client connection. Outgoing sequence numbers are per stream.
class Conn {
public:
    explicit Conn(net::TcpStream s) : stream(std::move(s)) {}

    void send(json message) {
        if (broken) return;
        message["seq"] = ++seq;
        try {
            stream.write_all(message.dump() + "\n");
        } catch (const Error&) {
            broken = true;
        }
    }

    void error(const std::string& session_id, ErrorCode code, const std::string& message,
               const Violations* violations = nullptr) {
        json m{{"type", "Error"}, {"session_id", session_id}, {"code", to_string(code)}, {"message", message}};
        if (violations) m["violations"] = violations_to_json(*violations);
        send(std::move(m));
    }

    net::TcpStream stream;
    std::int64_t seq = 0;
    bool broken = false;
};

json snapshot_message(const LiveSession& s) {
    return {{"type", "StateSnapshot"}, {"session_id", s.id}, {"phase", phase_of(s)},
            {"state", state_to_json(s.engine->state())}};
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownProfile:
        case ErrorCode::UnknownLevel:
        case ErrorCode::UnknownSession: return 404;
        case ErrorCode::ValidationFailed:
        case ErrorCode::InvalidLevel: return 422;
        case ErrorCode::DigestMismatch:
        case ErrorCode::ReplayDivergence: return 409;
        case ErrorCode::Io: return 500;
        default: return 400;
    }
}

void reply_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, ErrorCode code, const std::string& message,
                 const Violations* violations = nullptr) {
    json err{{"code", to_string(code)}, {"message", message}};
    if (violations) err["violations"] = violations_to_json(*violations);
    reply_json(res, json{{"error", err}}, http_status(code));
}

/// Profile for structural level checks when no patient is named: widest ROM,
/// both hands.
PatientProfile permissive_profile() {
    PatientProfile p;
    p.handedness = Handedness::Both;
    p.rom_extension_max = p.rom_flexion_max = 90.0;
    p.rom_deviation_left_max = p.rom_deviation_right_max = 90.0;
    return p;
}

}  // namespace

struct Service::Impl {
    explicit Impl(ServiceConfig c) : config(std::move(c)), storage(config.storage_root) {}

    ServiceConfig config;
    Storage storage;
    httplib::Server http;
    net::TcpListener listener;
    std::uint16_t http_port = 0;

    std::thread http_thread;
    std::thread accept_thread;
    std::thread reaper_thread;
    std::mutex conn_mutex;
    std::vector<std::thread> conn_threads;

    mutable std::mutex sessions_mutex;
    std::map<std::string, std::shared_ptr<LiveSession>> sessions;

    std::atomic<bool> stopping{false};
    std::mutex wait_mutex;
    std::condition_variable wait_cv;
    bool stopped = false;

    // -- live stream ---------------------------------------------------------

    void emit_events(Conn* conn, const LiveSession& s, std::span<const SessionEntry> entries) {
        if (!conn) return;
        for (const auto& e : entries)
            if (const auto* ev = std::get_if<EventEntry>(&e))
                conn->send({{"type", "Event"}, {"session_id", s.id}, {"event", event_to_json(ev->event)}});
    }

    /// Caller holds s.m. Ends the game if still running, persists, unregisters.
    void finish(LiveSession& s, std::optional<StopReason> reason, Conn* conn) {
        if (s.done) return;
        if (reason && s.engine->running()) {
            const auto entries = s.engine->stop(*reason);
            s.recorder->record_all(entries);
            emit_events(conn, s, entries);
        }
        const GameState& st = s.engine->state();
        std::optional<SessionRecord> record;
        std::optional<Error> failure;
        try {
            record = s.recorder->finalize(st.status, st.score, st.elapsed_ms);
        } catch (const Error& e) {
            failure = e;  // never retried: the session ends either way
        }
        s.done = true;
        s.source.reset();
        {
            std::lock_guard lock(sessions_mutex);
            sessions.erase(s.id);
        }
        if (!conn) return;
        conn->send(snapshot_message(s));
        if (failure) {
            conn->error(s.id, failure->code(), failure->what());
            conn->send({{"type", "SessionEnded"},
                        {"session_id", s.id},
                        {"status", status_to_json(st.status)},
                        {"final_score", st.score},
                        {"persisted", false}});
            return;
        }
        conn->send({{"type", "SessionEnded"},
                    {"session_id", s.id},
                    {"status", status_to_json(record->footer.status)},
                    {"final_score", record->footer.final_score},
                    {"entry_count", record->footer.entry_count},
                    {"digest", record->footer.digest},
                    {"persisted", true}});
    }

    /// Caller holds s.m.
    void feed(LiveSession& s, const HandFrame& frame, Conn* conn) {
        const auto observer = [&](const GameState& state, std::span<const GameEvent> events) {
            if (!conn) return;
            for (const auto& ev : events)
                conn->send({{"type", "Event"}, {"session_id", s.id}, {"event", event_to_json(ev)}});
            if (state.tick % s.snapshot_every == 0)
                conn->send({{"type", "StateSnapshot"},
                            {"session_id", s.id},
                            {"phase", std::string(to_string(state.status.state))},
                            {"state", state_to_json(state)}});
        };
        const auto entries = s.engine->push_frame(frame, observer);
        s.started = true;
        s.recorder->record_all(entries);
        if (!s.engine->running()) finish(s, std::nullopt, conn);
    }

    bool capped(const LiveSession& s) const { return Clock::now() - s.created > s.cap; }

    std::shared_ptr<LiveSession> start_session(const json& msg, Conn& conn) {
        auto str_field = [&](const char* key) -> std::optional<std::string> {
            auto it = msg.find(key);
            if (it == msg.end() || it->is_null()) return std::nullopt;
            if (!it->is_string()) throw Error(ErrorCode::ParseError, fmt::format("field '{}' must be a string", key));
            return it->get<std::string>();
        };
        const auto profile_id = str_field("profile_id");
        const auto level_id = str_field("level_id");
        if (!profile_id) throw Error(ErrorCode::ParseError, "field 'profile_id' is required");
        if (!level_id) throw Error(ErrorCode::ParseError, "field 'level_id' is required");
        auto profile = storage.get_profile(*profile_id);
        if (!profile) throw Error(ErrorCode::UnknownProfile, fmt::format("no profile '{}'", *profile_id));
        auto level = storage.get_level(*level_id);
        if (!level) throw Error(ErrorCode::UnknownLevel, fmt::format("no level '{}'", *level_id));

        GameKind kind = level->kind;
        if (auto k = str_field("game_kind")) {
            auto parsed = game_kind_from_string(*k);
            if (!parsed) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown game kind '{}'", *k));
            kind = *parsed;
        }
        GameMode mode = default_mode(kind);
        if (auto m = str_field("mode")) {
            auto parsed = game_mode_from_string(*m);
            if (!parsed) throw Error(ErrorCode::IllegalMode, fmt::format("unknown mode '{}'", *m));
            mode = *parsed;
        }
        EngineConfig engine_config;
        engine_config.tick_ms = config.tick_ms;
        if (auto it = msg.find("calibration"); it != msg.end()) engine_config.calibration = calibration_from_json(*it);

        auto s = std::make_shared<LiveSession>();
        if (auto it = msg.find("snapshot_every"); it != msg.end()) {
            if (!it->is_number_integer() || it->get<int>() < 1)
                throw Error(ErrorCode::InvalidArgument, "snapshot_every must be a positive integer");
            s->snapshot_every = it->get<int>();
        }
        if (auto it = msg.find("realtime"); it != msg.end() && it->is_boolean()) s->realtime = it->get<bool>();

        const std::string source_text = str_field("source").value_or("client");
        if (source_text != "client") s->source = make_source(parse_source_spec(source_text), *level, *profile, mode);

        // new_game raises InvalidLevel / IllegalMode / ValidationFailed; attach
        // the violations so the client can show them.
        auto level_ptr = std::make_shared<const Level>(*level);
        auto profile_ptr = std::make_shared<const PatientProfile>(*profile);
        try {
            s->engine.emplace(new_game(kind, mode, level_ptr, profile_ptr), engine_config);
        } catch (const Error& e) {
            Violations v;
            if (e.code() == ErrorCode::ValidationFailed) v = validate_profile(*profile);
            if (e.code() == ErrorCode::InvalidLevel) v = validate_level(*level, *profile);
            conn.error("", e.code(), e.what(), v.empty() ? nullptr : &v);
            return nullptr;
        }

        s->id = random_session_id();
        s->patient_id = profile->patient_id;
        const fs::path path = storage.session_path(s->patient_id, s->id);
        fs::create_directories(path.parent_path());
        s->recorder.emplace(make_header(s->id, kind, mode, *level, *profile, engine_config, utc_now_iso8601()),
                            path.string());
        s->created = Clock::now();
        s->cap = std::chrono::duration_cast<Clock::duration>(
                     std::chrono::duration<double>(profile->session_length)) +
                 config.cap_slack;
        {
            std::lock_guard lock(sessions_mutex);
            sessions.emplace(s->id, s);
        }
        conn.send(snapshot_message(*s));
        return s;
    }

    /// Returns the session this connection now drives (possibly unchanged).
    std::shared_ptr<LiveSession> handle(const std::string& line, Conn& conn, std::shared_ptr<LiveSession> sess) {
        const std::string sid = sess ? sess->id : std::string();
        json msg;
        try {
            msg = json::parse(line);
        } catch (const json::exception& e) {
            conn.error(sid, ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
            return sess;
        }
        if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
            conn.error(sid, ErrorCode::ParseError, "message must be an object with a string 'type'");
            return sess;
        }
        const std::string type = msg["type"].get<std::string>();
        try {
            if (sess && msg.contains("session_id") && msg["session_id"].is_string() &&
                !msg["session_id"].get<std::string>().empty() && msg["session_id"].get<std::string>() != sess->id &&
                type != "StartSession" && type != "AttachSession") {
                conn.error(sid, ErrorCode::UnknownSession, "session_id does not match this stream's session");
                return sess;
            }
            if (type == "StartSession") {
                if (sess) {
                    conn.error(sid, ErrorCode::InvalidArgument, "a session is already active on this stream");
                    return sess;
                }
                return start_session(msg, conn);
            }
            if (type == "AttachSession") {
                if (sess) {
                    conn.error(sid, ErrorCode::InvalidArgument, "a session is already active on this stream");
                    return sess;
                }
                const std::string want = msg.value("session_id", std::string());
                std::shared_ptr<LiveSession> found;
                {
                    std::lock_guard lock(sessions_mutex);
                    if (auto it = sessions.find(want); it != sessions.end()) found = it->second;
                }
                if (found) {
                    std::lock_guard lock(found->m);
                    if (!found->done && !found->attached) {
                        found->attached = true;
                        conn.send(snapshot_message(*found));
                        return found;
                    }
                }
                conn.error(want, ErrorCode::UnknownSession, fmt::format("no detached session '{}'", want));
                return sess;
            }
            if (!sess) {
                conn.error("", ErrorCode::UnknownSession, "no session on this stream; send StartSession first");
                return sess;
            }
            std::lock_guard lock(sess->m);
            if (type == "InputFrame") {
                if (sess->source) {
                    conn.error(sid, ErrorCode::InvalidArgument, "this session is fed by a server-side source");
                    return sess;
                }
                if (!msg.contains("frame")) {
                    conn.error(sid, ErrorCode::ParseError, "field 'frame' is required");
                    return sess;
                }
                HandFrame frame;
                try {
                    frame = frame_from_json(msg["frame"], "frame");
                } catch (const Error& e) {
                    conn.error(sid, ErrorCode::MalformedFrame, e.what());
                    return sess;
                }
                feed(*sess, frame, &conn);
            } else if (type == "StopSession") {
                finish(*sess, StopReason::UserStop, &conn);
            } else {
                conn.error(sid, ErrorCode::InvalidArgument, fmt::format("unknown message type '{}'", type));
            }
        } catch (const Error& e) {
            conn.error(sid, e.code(), e.what());
        } catch (const json::exception& e) {
            conn.error(sid, ErrorCode::ParseError, e.what());
        }
        return sess;
    }

    /// Pulls a batch of frames from a server-side source. Caller holds s.m.
    void pump(LiveSession& s, Conn& conn) {
        for (int i = 0; i < 20 && !s.done; ++i) {
            std::optional<HandFrame> frame;
            try {
                frame = s.source->next_frame();
            } catch (const Error& e) {
                conn.error(s.id, e.code(), e.what());
                finish(s, e.code() == ErrorCode::BridgeDisconnected ? StopReason::Disconnected
                                                                     : StopReason::SourceEnded,
                       &conn);
                return;
            }
            if (!frame) {
                finish(s, StopReason::SourceEnded, &conn);
                return;
            }
            if (s.realtime) {
                if (!s.first_frame_ms) s.first_frame_ms = frame->timestamp_ms;
                const auto due = s.created + std::chrono::duration_cast<Clock::duration>(
                                                 std::chrono::duration<double, std::milli>(frame->timestamp_ms -
                                                                                           *s.first_frame_ms));
                std::this_thread::sleep_until(due);
            }
            try {
                feed(s, *frame, &conn);
            } catch (const Error& e) {
                conn.error(s.id, e.code(), e.what());
            }
        }
    }

    void serve_connection(net::TcpStream stream) {
        Conn conn(std::move(stream));
        std::shared_ptr<LiveSession> sess;
        while (!stopping && !conn.broken) {
            bool pumping = false;
            if (sess) {
                std::lock_guard lock(sess->m);
                if (!sess->done && capped(*sess)) finish(*sess, StopReason::SessionCap, &conn);
                if (sess->done) break;
                if (sess->source) {
                    pump(*sess, conn);
                    if (sess->done) break;
                    pumping = true;
                }
            }
            std::string line;
            net::TcpStream::ReadStatus status;
            try {
                status = conn.stream.read_line_for(pumping ? 0ms : 100ms, line);
            } catch (const Error&) {
                break;
            }
            if (status == net::TcpStream::ReadStatus::Closed) break;
            if (status == net::TcpStream::ReadStatus::Timeout) continue;
            sess = handle(line, conn, sess);
            if (sess) {
                std::lock_guard lock(sess->m);
                if (sess->done) break;
            }
        }
        if (sess) {
            std::lock_guard lock(sess->m);
            if (!sess->done) {
                if (stopping) {
                    finish(*sess, StopReason::Disconnected, conn.broken ? nullptr : &conn);
                } else {
                    sess->attached = false;
                    sess->detached_at = Clock::now();
                }
            }
        }
        conn.stream.close();
    }

    void reap() {
        std::vector<std::shared_ptr<LiveSession>> snapshot;
        {
            std::lock_guard lock(sessions_mutex);
            for (auto& [id, s] : sessions) snapshot.push_back(s);
        }
        const auto now = Clock::now();
        for (auto& s : snapshot) {
            std::lock_guard lock(s->m);
            if (s->done || s->attached) continue;
            if (now - s->detached_at >= config.disconnect_grace) finish(*s, StopReason::Disconnected, nullptr);
            else if (capped(*s)) finish(*s, StopReason::SessionCap, nullptr);
        }
    }

    // -- HTTP catalog -----------------------------------------------------------

    void routes() {
        http.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            std::size_t live;
            {
                std::lock_guard lock(sessions_mutex);
                live = sessions.size();
            }
            reply_json(res, {{"status", "ok"}, {"live_sessions", live}, {"engine_version", kEngineVersion}});
        });

        http.Get("/profiles", [this](const httplib::Request&, httplib::Response& res) {
            reply_json(res, {{"profiles", storage.list_profiles()}});
        });
        http.Get(R"(/profiles/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                auto p = storage.get_profile(id);
                if (!p) return reply_error(res, ErrorCode::UnknownProfile, fmt::format("no profile '{}'", id));
                reply_json(res, profile_to_json(*p));
            });
        });
        const auto put_profile = [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                require_id(id, "profile");
                const PatientProfile p = load_profile(req.body);
                const Violations v = validate_profile(p);
                if (!v.empty()) return reply_error(res, ErrorCode::ValidationFailed, "profile is invalid", &v);
                storage.put_profile(id, p);
                reply_json(res, {{"id", id}, {"patient_id", p.patient_id}}, 201);
            });
        };
        http.Put(R"(/profiles/([^/]+))", put_profile);
        http.Post(R"(/profiles/([^/]+))", put_profile);

        http.Get("/levels", [this](const httplib::Request&, httplib::Response& res) {
            reply_json(res, {{"levels", storage.list_levels()}});
        });
        http.Get(R"(/levels/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                auto l = storage.get_level(id);
                if (!l) return reply_error(res, ErrorCode::UnknownLevel, fmt::format("no level '{}'", id));
                reply_json(res, level_to_json(*l));
            });
        });
        const auto put_level = [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                require_id(id, "level");
                const Level level = load_level(req.body);
                PatientProfile against = permissive_profile();
                if (req.has_param("profile_id")) {
                    const std::string pid = req.get_param_value("profile_id");
                    auto p = storage.get_profile(pid);
                    if (!p) return reply_error(res, ErrorCode::UnknownProfile, fmt::format("no profile '{}'", pid));
                    against = *p;
                }
                const Violations v = validate_level(level, against);
                if (!v.empty()) return reply_error(res, ErrorCode::ValidationFailed, "level is invalid", &v);
                storage.put_level(id, level);
                reply_json(res, {{"id", id}, {"game_kind", to_string(level.kind)}}, 201);
            });
        };
        http.Put(R"(/levels/([^/]+))", put_level);
        http.Post(R"(/levels/([^/]+))", put_level);

        http.Get("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                std::optional<std::string> pid;
                if (req.has_param("patient_id")) pid = req.get_param_value("patient_id");
                json list = json::array();
                for (const auto& info : storage.list_sessions(pid)) {
                    json item;
                    try {
                        item = session_summary_json(read_session_file(info.path.string()));
                        item["integrity"] = "ok";
                    } catch (const Error& e) {
                        item = {{"session_id", info.session_id},
                                {"patient_id", info.patient_id},
                                {"integrity", "corrupt"},
                                {"error", to_string(e.code())}};
                    }
                    list.push_back(std::move(item));
                }
                reply_json(res, {{"sessions", list}});
            });
        });
        http.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            with_session_bytes(req, res, [&](const std::string& bytes) {
                res.set_content(bytes, "application/x-ndjson");
            });
        });
        http.Get(R"(/sessions/([^/]+)/stats)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session_bytes(req, res, [&](const std::string& bytes) {
                const SessionRecord r = parse_session(bytes);
                json body = session_summary_json(r);
                body["stats"] = stats_to_json(statistics(r));
                reply_json(res, body);
            });
        });
        http.Get(R"(/sessions/([^/]+)/timeseries)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session_bytes(req, res, [&](const std::string& bytes) {
                if (!req.has_param("channel"))
                    return reply_error(res, ErrorCode::InvalidArgument, "query parameter 'channel' is required");
                const AngleChannel c = angle_channel_from_string(req.get_param_value("channel"));
                res.set_content(export_timeseries(parse_session(bytes), c), "text/csv");
            });
        });
        http.Get(R"(/sessions/([^/]+)/verify)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session_bytes(req, res, [&](const std::string& bytes) {
                const ReplayReport rep = verify_session_bytes(bytes);
                reply_json(res, {{"ok", true},
                                 {"ticks", rep.ticks},
                                 {"digests_checked", rep.digests_checked},
                                 {"final_score", rep.final_state.score},
                                 {"status", status_to_json(rep.final_state.status)}});
            });
        });
        // Server-side replay states for the replay viewer's scrubber.
        http.Get(R"(/sessions/([^/]+)/states)", [this](const httplib::Request& req, httplib::Response& res) {
            with_session_bytes(req, res, [&](const std::string& bytes) {
                long every = 1;
                if (req.has_param("every")) {
                    try {
                        every = std::stol(req.get_param_value("every"));
                    } catch (const std::exception&) {
                        every = 0;
                    }
                    if (every < 1)
                        return reply_error(res, ErrorCode::InvalidArgument, "'every' must be a positive integer");
                }
                json states = json::array();
                replay(parse_session(bytes), [&](const ReplayStep& step) {
                    if (step.state.tick % every == 0) states.push_back(state_to_json(step.state));
                });
                reply_json(res, {{"states", states}});
            });
        });
    }

    template <typename F>
    void guarded(httplib::Response& res, F&& body) {
        try {
            body();
        } catch (const Error& e) {
            reply_error(res, e.code(), e.what());
        } catch (const std::exception& e) {
            reply_error(res, ErrorCode::Io, e.what());
        }
    }

    template <typename F>
    void with_session_bytes(const httplib::Request& req, httplib::Response& res, F&& body) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            auto bytes = storage.read_session_bytes(id);
            if (!bytes) return reply_error(res, ErrorCode::UnknownSession, fmt::format("no session '{}'", id));
            body(*bytes);
        });
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
    if (impl_->config.tick_ms <= 0 || impl_->config.tick_ms > 100)
        throw Error(ErrorCode::InvalidArgument, "tick must be in (0, 100] ms");
}

Service::~Service() { stop(); }

void Service::start() {
    Impl& d = *impl_;
    d.routes();
    if (d.config.http_port == 0) {
        const int port = d.http.bind_to_any_port(d.config.bind_host);
        if (port <= 0) throw Error(ErrorCode::Io, fmt::format("cannot bind HTTP on {}", d.config.bind_host));
        d.http_port = static_cast<std::uint16_t>(port);
    } else {
        if (!d.http.bind_to_port(d.config.bind_host, d.config.http_port))
            throw Error(ErrorCode::Io, fmt::format("cannot bind HTTP on {}:{}", d.config.bind_host, d.config.http_port));
        d.http_port = d.config.http_port;
    }
    d.listener = net::TcpListener::bind(d.config.bind_host, d.config.stream_port);
    d.http_thread = std::thread([&d] { d.http.listen_after_bind(); });
    d.accept_thread = std::thread([&d] {
        while (!d.stopping) {
            auto conn = d.listener.accept_for(100ms);
            if (!conn) continue;
            std::lock_guard lock(d.conn_mutex);
            d.conn_threads.emplace_back([&d, s = std::move(*conn)]() mutable { d.serve_connection(std::move(s)); });
        }
    });
    d.reaper_thread = std::thread([&d] {
        while (!d.stopping) {
            d.reap();
            std::this_thread::sleep_for(50ms);
        }
    });
}

void Service::stop() {
    Impl& d = *impl_;
    if (d.stopping.exchange(true)) return;
    d.http.stop();
    if (d.http_thread.joinable()) d.http_thread.join();
    if (d.accept_thread.joinable()) d.accept_thread.join();
    d.listener.close();
    {
        std::lock_guard lock(d.conn_mutex);
        for (auto& t : d.conn_threads)
            if (t.joinable()) t.join();
        d.conn_threads.clear();
    }
    if (d.reaper_thread.joinable()) d.reaper_thread.join();
    std::vector<std::shared_ptr<LiveSession>> left;
    {
        std::lock_guard lock(d.sessions_mutex);
        for (auto& [id, s] : d.sessions) left.push_back(s);
    }
    for (auto& s : left) {
        std::lock_guard lock(s->m);
        d.finish(*s, StopReason::Disconnected, nullptr);
    }
    {
        std::lock_guard lock(d.wait_mutex);
        d.stopped = true;
    }
    d.wait_cv.notify_all();
}

void Service::wait() {
    std::unique_lock lock(impl_->wait_mutex);
    impl_->wait_cv.wait(lock, [this] { return impl_->stopped; });
}

std::uint16_t Service::http_port() const { return impl_->http_port; }
std::uint16_t Service::stream_port() const { return impl_->listener.port(); }
Storage& Service::storage() { return impl_->storage; }

std::size_t Service::live_sessions() const {
    std::lock_guard lock(impl_->sessions_mutex);
    return impl_->sessions.size();
}

// ---------------------------------------------------------------------------
// Client

LiveClient LiveClient::connect(const std::string& host, std::uint16_t port) {
    return LiveClient(net::TcpStream::connect(host, port));
}

void LiveClient::send(json message) {
    message["seq"] = ++seq_;
    if (!session_id_.empty() && !message.contains("session_id")) message["session_id"] = session_id_;
    stream_.write_all(message.dump() + "\n");
}

std::optional<json> LiveClient::receive(std::chrono::milliseconds timeout) {
    if (closed_) return std::nullopt;
    std::string line;
    net::TcpStream::ReadStatus status;
    try {
        status = stream_.read_line_for(timeout, line);
    } catch (const Error&) {
        closed_ = true;
        return std::nullopt;
    }
    if (status == net::TcpStream::ReadStatus::Closed) closed_ = true;
    if (status != net::TcpStream::ReadStatus::Line) return std::nullopt;
    json msg = detail::parse_document(line);
    if (session_id_.empty() && msg.contains("session_id") && msg["session_id"].is_string())
        session_id_ = msg["session_id"].get<std::string>();
    return msg;
}

json start_session_message(const std::string& profile_id, const std::string& level_id, GameKind kind, GameMode mode,
                           const std::string& source) {
    return {{"type", "StartSession"}, {"profile_id", profile_id}, {"level_id", level_id},
            {"game_kind", to_string(kind)}, {"mode", to_string(mode)}, {"source", source}};
}

json input_frame_message(const HandFrame& frame) { return {{"type", "InputFrame"}, {"frame", frame_to_json(frame)}}; }

json stop_session_message() { return {{"type", "StopSession"}}; }

json attach_session_message(const std::string& session_id) {
    return {{"type", "AttachSession"}, {"session_id", session_id}};
}

}  // namespace wr
