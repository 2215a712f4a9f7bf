#pragma once

// Session service: a JSON-over-HTTP catalog (profiles, levels, sessions,
// statistics, CSV) and a live stream of newline-delimited JSON messages
// over TCP where clients start sessions, feed frames and receive state
// snapshots and events. The engine ticks server-side.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "wristrehab/codec.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/net.hpp"
#include "wristrehab/profiles.hpp"
#include "wristrehab/session_store.hpp"

namespace wr {

inline constexpr const char* kStorageEnvVar = "WRISTREHAB_STORAGE";

/// Filesystem catalog: <root>/profiles/<id>.json, <root>/levels/<id>.json,
/// <root>/sessions/<patient_id>/<session_id>.wrsession. Writes are atomic
/// renames; readers share a lock, writers take it exclusively.
class Storage {
public:
    explicit Storage(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    /// Ids are [A-Za-z0-9_.-]{1,128}, not starting with '.'.
    static bool valid_id(std::string_view id);

    void put_profile(const std::string& id, const PatientProfile& profile);
    std::optional<PatientProfile> get_profile(const std::string& id) const;
    std::vector<std::string> list_profiles() const;

    void put_level(const std::string& id, const Level& level);
    std::optional<Level> get_level(const std::string& id) const;
    std::vector<std::string> list_levels() const;

    std::filesystem::path session_path(const std::string& patient_id, const std::string& session_id) const;

    struct SessionInfo {
        std::string session_id;
        std::string patient_id;
        std::filesystem::path path;
    };
    std::vector<SessionInfo> list_sessions(const std::optional<std::string>& patient_id = std::nullopt) const;
    std::optional<SessionInfo> find_session(const std::string& session_id) const;
    /// Raw bytes of a finalized session.
    std::optional<std::string> read_session_bytes(const std::string& session_id) const;

private:
    std::vector<std::string> list_ids(const std::filesystem::path& dir) const;

    std::filesystem::path root_;
    mutable std::shared_mutex mutex_;
};

struct ServiceConfig {
    std::filesystem::path storage_root = "storage";
    std::string bind_host = "127.0.0.1";
    std::uint16_t http_port = 8080;    // 0 picks a free port
    std::uint16_t stream_port = 8081;  // 0 picks a free port
    std::int64_t tick_ms = kTickMs;
    std::chrono::milliseconds disconnect_grace{5000};
    std::chrono::milliseconds cap_slack{10000};  // beyond profile.session_length
};

/// Storage root: explicit flag, else $WRISTREHAB_STORAGE, else "storage".
std::filesystem::path resolve_storage_root(const std::optional<std::string>& flag);

class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds both ports and serves on background threads.
    void start();
    /// Stops accepting, auto-stops live sessions (Disconnected) and joins.
    void stop();
    /// Blocks until stop() is called from another thread or a signal handler.
    void wait();

    std::uint16_t http_port() const;
    std::uint16_t stream_port() const;
    Storage& storage();

    /// Sessions currently live (running or awaiting reattachment).
    std::size_t live_sessions() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Live stream client (tests, tools, headless players)

class LiveClient {
public:
    static LiveClient connect(const std::string& host, std::uint16_t port);

    /// Sends one message, stamping "seq" (and "session_id" once known).
    void send(json message);
    /// Next server message; empty when the server closed the stream or the
    /// timeout expired (check closed()).
    std::optional<json> receive(std::chrono::milliseconds timeout = std::chrono::milliseconds(10000));
    bool closed() const { return closed_; }

    const std::string& session_id() const { return session_id_; }
    void set_session_id(std::string id) { session_id_ = std::move(id); }

    void close() { stream_.close(); }

private:
    explicit LiveClient(net::TcpStream s) : stream_(std::move(s)) {}

    net::TcpStream stream_;
    std::int64_t seq_ = 0;
    std::string session_id_;
    bool closed_ = false;
};

/// Message builders for the live stream.
json start_session_message(const std::string& profile_id, const std::string& level_id, GameKind kind, GameMode mode,
                           const std::string& source = "client");
json input_frame_message(const HandFrame& frame);
json stop_session_message();
json attach_session_message(const std::string& session_id);

}  // namespace wr
