#include <doctest.h>

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "support.hpp"
#include "wristrehab/codec.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/fileio.hpp"
#include "wristrehab/service.hpp"
#include "wristrehab/session_store.hpp"

using namespace wr;
using namespace std::chrono_literals;

namespace {

struct Harness {
    test::TempDir dir;
    std::unique_ptr<Service> service;

    explicit Harness(std::chrono::milliseconds grace = 5000ms, std::chrono::milliseconds cap_slack = 10000ms) {
        ServiceConfig cfg;
        cfg.storage_root = dir.path() / "store";
        cfg.http_port = 0;
        cfg.stream_port = 0;
        cfg.disconnect_grace = grace;
        cfg.cap_slack = cap_slack;
        service = std::make_unique<Service>(cfg);
        service->start();
    }

    httplib::Client http() const {
        httplib::Client c("127.0.0.1", service->http_port());
        c.set_read_timeout(30, 0);
        return c;
    }

    LiveClient live() const { return LiveClient::connect("127.0.0.1", service->stream_port()); }

    /// Seeds the catalog with profile "p1" and a long rhythm level "lv1".
    void seed() {
        auto c = http();
        auto r = c.Put("/profiles/p1", save_profile(test::profile()), "application/json");
        REQUIRE(r);
        REQUIRE(r->status == 201);
        std::vector<double> notes;
        for (int i = 1; i <= 30; ++i) notes.push_back(i * 1.0);
        r = c.Put("/levels/lv1?profile_id=p1", save_level(test::rhythm_level(notes, Hand::Right, 60.0)),
                  "application/json");
        REQUIRE(r);
        REQUIRE(r->status == 201);
    }
};

/// Receives until a message of `type` arrives (inclusive) or the stream ends.
std::vector<json> until(LiveClient& c, const std::string& type, std::chrono::milliseconds timeout = 10000ms) {
    std::vector<json> out;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        auto m = c.receive(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()));
        if (!m) break;
        out.push_back(*m);
        if ((*m)["type"] == type) break;
    }
    return out;
}

std::vector<json> drain_for(LiveClient& c, std::chrono::milliseconds quiet) {
    std::vector<json> out;
    while (auto m = c.receive(quiet)) out.push_back(*m);
    return out;
}

HandFrame press_frame(double t_ms) {
    // 1 Hz sine whose fastest flexion falls on whole seconds, where the notes are.
    const double fe = -30.0 * std::sin(2.0 * 3.14159265358979323846 * t_ms / 1000.0);
    return test::frame_at(t_ms, std::nullopt, Angles{fe, 0});
}

bool gap_free(const std::vector<json>& msgs, std::int64_t& next) {
    for (const auto& m : msgs) {
        if (m["seq"].get<std::int64_t>() != next) return false;
        ++next;
    }
    return true;
}

}  // namespace

TEST_CASE("catalog: profiles") {
    Harness h;
    auto c = h.http();
    auto r = c.Get("/health");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(json::parse(r->body)["status"] == "ok");

    r = c.Put("/profiles/p1", save_profile(test::profile()), "application/json");
    REQUIRE(r);
    CHECK(r->status == 201);
    r = c.Get("/profiles/p1");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(load_profile(r->body) == test::profile());
    r = c.Get("/profiles");
    CHECK(json::parse(r->body)["profiles"] == json::array({"p1"}));

    PatientProfile bad = test::profile();
    bad.rom_extension_max = 0;
    bad.session_length = -1;
    r = c.Put("/profiles/p2", save_profile(bad), "application/json");
    REQUIRE(r);
    CHECK(r->status == 422);
    const json err = json::parse(r->body)["error"];
    CHECK(err["code"] == "ValidationFailed");
    CHECK(err["violations"].size() == 2);
    CHECK(c.Get("/profiles/p2")->status == 404);
    CHECK(json::parse(c.Get("/profiles/p2")->body)["error"]["code"] == "UnknownProfile");

    r = c.Put("/profiles/p3", "{\"patient_id\": ", "application/json");
    CHECK(r->status == 400);
    CHECK(json::parse(r->body)["error"]["code"] == "ParseError");
    r = c.Put("/profiles/.hidden", save_profile(test::profile()), "application/json");
    CHECK(r->status == 400);
    CHECK(json::parse(r->body)["error"]["code"] == "InvalidArgument");
}

TEST_CASE("catalog: levels are validated against the named profile") {
    Harness h;
    h.seed();
    auto c = h.http();
    auto r = c.Get("/levels/lv1");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(load_level(r->body).elements.size() == 30);

    // Left-lane notes cannot be played by a right-handed patient.
    const Level left = test::rhythm_level({1.0, 2.0}, Hand::Left);
    r = c.Put("/levels/hard?profile_id=p1", save_level(left), "application/json");
    CHECK(r->status == 422);
    const json err = json::parse(r->body)["error"];
    CHECK(err["code"] == "ValidationFailed");
    CHECK(err["violations"][0]["field"] == "elements[0].lane");
    // Without a profile only structural rules apply.
    r = c.Put("/levels/hard", save_level(left), "application/json");
    CHECK(r->status == 201);
    r = c.Put("/levels/x?profile_id=nobody", save_level(left), "application/json");
    CHECK(r->status == 404);
    CHECK(json::parse(c.Get("/levels")->body)["levels"] == json::array({"hard", "lv1"}));
    CHECK(c.Get("/sessions/none")->status == 404);
}

TEST_CASE("live session end to end") {
    Harness h;
    h.seed();
    LiveClient cl = h.live();
    cl.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard));
    auto first = until(cl, "StateSnapshot");
    REQUIRE(first.size() == 1);
    CHECK(first[0]["phase"] == "Lobby");
    const std::string sid = first[0]["session_id"];
    CHECK(cl.session_id() == sid);
    CHECK(h.service->live_sessions() == 1);

    std::vector<json> all = first;
    for (int i = 0; i <= 500; ++i) {
        cl.send(input_frame_message(press_frame(i * 10.0)));
        if (i % 50 == 0) {
            auto got = drain_for(cl, 20ms);
            all.insert(all.end(), got.begin(), got.end());
        }
    }
    cl.send(stop_session_message());
    auto rest = until(cl, "SessionEnded");
    all.insert(all.end(), rest.begin(), rest.end());
    REQUIRE(all.back()["type"] == "SessionEnded");

    std::int64_t next = 1;
    CHECK(gap_free(all, next));
    int snapshots = 0, events = 0, hits = 0;
    for (const auto& m : all) {
        CHECK(m["session_id"] == sid);
        snapshots += m["type"] == "StateSnapshot";
        if (m["type"] == "Event") {
            ++events;
            hits += m["event"]["kind"] == "Hit";
        }
        CHECK(m["type"] != "Error");
    }
    CHECK(snapshots >= 500);
    CHECK(hits >= 3);
    const json ended = all.back();
    CHECK(ended["status"]["state"] == "Stopped");
    CHECK(ended["status"]["reason"] == "UserStop");
    CHECK(h.service->live_sessions() == 0);

    // The recording is in the catalog and verifies.
    auto c = h.http();
    auto r = c.Get("/sessions?patient_id=p001");
    REQUIRE(r);
    const json list = json::parse(r->body)["sessions"];
    REQUIRE(list.size() == 1);
    CHECK(list[0]["session_id"] == sid);
    CHECK(list[0]["integrity"] == "ok");
    CHECK(list[0]["final_score"] == ended["final_score"]);
    CHECK(json::parse(c.Get("/sessions?patient_id=other")->body)["sessions"].empty());

    r = c.Get("/sessions/" + sid);
    REQUIRE(r->status == 200);
    const SessionRecord rec = parse_session(r->body);
    CHECK(rec.footer.digest == ended["digest"]);
    CHECK(rec.footer.entry_count == ended["entry_count"]);
    CHECK(rec.header.profile == test::profile());

    r = c.Get("/sessions/" + sid + "/verify");
    CHECK(r->status == 200);
    CHECK(json::parse(r->body)["ok"] == true);
    CHECK(json::parse(r->body)["ticks"] == 500);

    r = c.Get("/sessions/" + sid + "/stats");
    const json stats = json::parse(r->body)["stats"];
    CHECK(stats["frame_count"] == 501);
    CHECK(stats["hits"] == hits);

    r = c.Get("/sessions/" + sid + "/timeseries?channel=flexion_extension_right");
    CHECK(r->status == 200);
    CHECK(r->body.rfind("timestamp_ms,angle_deg\n", 0) == 0);
    CHECK(std::count(r->body.begin(), r->body.end(), '\n') == 502);
    r = c.Get("/sessions/" + sid + "/timeseries?channel=knee");
    CHECK(r->status == 400);
    CHECK(json::parse(r->body)["error"]["code"] == "UnknownChannel");

    r = c.Get("/sessions/" + sid + "/states?every=100");
    CHECK(json::parse(r->body)["states"].size() == 5);

    // Corrupting the file on disk is reported, never served as valid.
    const auto path = h.service->storage().find_session(sid)->path;
    std::string bytes = read_text_file(path.string());
    bytes[bytes.size() / 2] ^= 1;
    write_file_atomic(path.string(), bytes);
    r = c.Get("/sessions/" + sid + "/verify");
    CHECK(r->status == 409);
    CHECK(json::parse(r->body)["error"]["code"] == "DigestMismatch");
    CHECK(json::parse(c.Get("/sessions")->body)["sessions"][0]["integrity"] == "corrupt");
}

TEST_CASE("live stream errors keep the session alive") {
    Harness h;
    h.seed();
    LiveClient cl = h.live();

    cl.send(input_frame_message(press_frame(0)));
    auto m = cl.receive();
    REQUIRE(m);
    CHECK((*m)["type"] == "Error");
    CHECK((*m)["code"] == "UnknownSession");

    cl.send(start_session_message("ghost", "lv1", GameKind::Rhythm, GameMode::Standard));
    m = cl.receive();
    CHECK((*m)["code"] == "UnknownProfile");
    cl.send(start_session_message("p1", "nope", GameKind::Rhythm, GameMode::Standard));
    m = cl.receive();
    CHECK((*m)["code"] == "UnknownLevel");
    cl.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Impulse));
    m = cl.receive();
    CHECK((*m)["code"] == "IllegalMode");

    cl.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard));
    REQUIRE(until(cl, "StateSnapshot").size() == 1);

    for (int i = 0; i < 10; ++i) cl.send(input_frame_message(press_frame(i * 10.0)));
    drain_for(cl, 100ms);

    cl.send(input_frame_message(press_frame(50)));  // older than the last frame
    auto got = until(cl, "Error");
    REQUIRE_FALSE(got.empty());
    CHECK(got.back()["code"] == "OutOfOrderEntry");

    json bad = input_frame_message(press_frame(200));
    bad["frame"]["right"]["confidence"] = 3.0;
    cl.send(bad);
    got = until(cl, "Error");
    CHECK(got.back()["code"] == "MalformedFrame");

    cl.send(json{{"type", "Dance"}});
    got = until(cl, "Error");
    CHECK(got.back()["code"] == "InvalidArgument");

    // Still running: a later valid frame ticks the game on.
    cl.send(input_frame_message(press_frame(300)));
    got = until(cl, "StateSnapshot");
    REQUIRE_FALSE(got.empty());
    CHECK(got.back()["state"]["elapsed_ms"] == 100);
    cl.send(stop_session_message());
    got = until(cl, "SessionEnded");
    CHECK(got.back()["type"] == "SessionEnded");
    CHECK(got.back()["entry_count"].get<int>() > 0);
}

TEST_CASE("disconnect: reattach within the grace period, stop after it") {
    SUBCASE("reattach") {
        Harness h(3000ms);
        h.seed();
        std::string sid;
        {
            LiveClient cl = h.live();
            cl.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard));
            sid = until(cl, "StateSnapshot").at(0)["session_id"];
            for (int i = 0; i < 100; ++i) cl.send(input_frame_message(press_frame(i * 10.0)));
            drain_for(cl, 100ms);
            cl.close();
        }
        std::this_thread::sleep_for(300ms);
        CHECK(h.service->live_sessions() == 1);
        LiveClient again = h.live();
        again.send(attach_session_message(sid));
        auto snap = until(again, "StateSnapshot");
        REQUIRE(snap.size() == 1);
        CHECK(snap[0]["session_id"] == sid);
        CHECK(snap[0]["state"]["elapsed_ms"] == 990);
        for (int i = 100; i < 200; ++i) again.send(input_frame_message(press_frame(i * 10.0)));
        again.send(stop_session_message());
        auto end = until(again, "SessionEnded");
        REQUIRE(end.back()["type"] == "SessionEnded");
        const SessionRecord rec = read_session_file(h.service->storage().find_session(sid)->path.string());
        CHECK(rec.footer.status.reason == StopReason::UserStop);
        CHECK(rec.footer.elapsed_ms == 1990);
        CHECK_NOTHROW(replay(rec));

        // A finished session cannot be attached.
        LiveClient late = h.live();
        late.send(attach_session_message(sid));
        CHECK((*late.receive())["code"] == "UnknownSession");
    }

    SUBCASE("grace expires") {
        Harness h(200ms);
        h.seed();
        std::string sid;
        {
            LiveClient cl = h.live();
            cl.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard));
            sid = until(cl, "StateSnapshot").at(0)["session_id"];
            for (int i = 0; i < 50; ++i) cl.send(input_frame_message(press_frame(i * 10.0)));
            drain_for(cl, 100ms);
            cl.close();
        }
        for (int i = 0; i < 100 && h.service->live_sessions() > 0; ++i) std::this_thread::sleep_for(20ms);
        CHECK(h.service->live_sessions() == 0);
        const auto info = h.service->storage().find_session(sid);
        REQUIRE(info.has_value());
        const SessionRecord rec = read_session_file(info->path.string());
        CHECK(rec.footer.status.state == RunState::Stopped);
        CHECK(rec.footer.status.reason == StopReason::Disconnected);
        CHECK_NOTHROW(replay(rec));
    }
}

TEST_CASE("sessions are capped by wall clock") {
    // Cap = session_length (120 s) + slack; a negative slack leaves 400 ms.
    Harness h(5000ms, -119600ms);
    h.seed();
    LiveClient cl = h.live();
    cl.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard));
    REQUIRE(until(cl, "StateSnapshot").size() == 1);
    for (int i = 0; i < 20; ++i) cl.send(input_frame_message(press_frame(i * 10.0)));
    const auto got = until(cl, "SessionEnded", 5000ms);
    REQUIRE_FALSE(got.empty());
    CHECK(got.back()["type"] == "SessionEnded");
    CHECK(got.back()["status"]["reason"] == "SessionCap");
}

TEST_CASE("server-side sources drive a session") {
    Harness h;
    h.seed();
    LiveClient cl = h.live();
    json start = start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard,
                                       "synthetic:fe_right=sine(30,1),duration=4");
    start["snapshot_every"] = 50;
    cl.send(start);
    const auto msgs = until(cl, "SessionEnded", 20000ms);
    REQUIRE_FALSE(msgs.empty());
    CHECK(msgs.back()["status"]["reason"] == "SourceEnded");
    int snapshots = 0;
    for (const auto& m : msgs) snapshots += m["type"] == "StateSnapshot";
    CHECK(snapshots >= 8);

    LiveClient other = h.live();
    other.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard, "webcam"));
    CHECK((*other.receive())["code"] == "InvalidArgument");
}

TEST_CASE("concurrent sessions stay isolated") {
    Harness h;
    h.seed();
    constexpr int kClients = 8;
    std::vector<std::thread> threads;
    std::vector<std::string> ids(kClients), digests(kClients);
    std::atomic<int> gap_free_count{0};
    for (int k = 0; k < kClients; ++k) {
        threads.emplace_back([&, k] {
            LiveClient cl = h.live();
            json start = start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard);
            start["snapshot_every"] = 20;
            cl.send(start);
            std::vector<json> all = until(cl, "StateSnapshot");
            if (all.empty()) return;
            ids[k] = all[0]["session_id"];
            for (int i = 0; i <= 300; ++i) {
                HandFrame f = press_frame(i * 10.0 + k);  // distinct per client
                cl.send(input_frame_message(f));
            }
            cl.send(stop_session_message());
            auto rest = until(cl, "SessionEnded", 20000ms);
            all.insert(all.end(), rest.begin(), rest.end());
            std::int64_t next = 1;
            if (gap_free(all, next) && all.back()["type"] == "SessionEnded") {
                ++gap_free_count;
                digests[k] = all.back()["digest"];
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(gap_free_count == kClients);
    CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == kClients);
    auto c = h.http();
    const json list = json::parse(c.Get("/sessions")->body)["sessions"];
    CHECK(list.size() == kClients);
    for (int k = 0; k < kClients; ++k) {
        const auto r = c.Get("/sessions/" + ids[k] + "/verify");
        REQUIRE(r);
        CHECK(r->status == 200);
        CHECK(parse_session(c.Get("/sessions/" + ids[k])->body).footer.digest == digests[k]);
    }
}

TEST_CASE("stopping the service finishes live sessions") {
    Harness h;
    h.seed();
    LiveClient cl = h.live();
    cl.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard));
    const std::string sid = until(cl, "StateSnapshot").at(0)["session_id"];
    for (int i = 0; i < 30; ++i) cl.send(input_frame_message(press_frame(i * 10.0)));
    drain_for(cl, 100ms);
    h.service->stop();
    const SessionRecord rec = read_session_file(h.service->storage().find_session(sid)->path.string());
    CHECK(rec.footer.status.reason == StopReason::Disconnected);
}

TEST_CASE("a session whose record cannot be persisted still ends") {
    Harness h;
    h.seed();
    LiveClient cl = h.live();
    cl.send(start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard));
    auto first = until(cl, "StateSnapshot");
    REQUIRE(first.size() == 1);
    const std::string sid = first[0]["session_id"];
    for (int i = 0; i < 50; ++i) cl.send(input_frame_message(press_frame(i * 10.0)));
    drain_for(cl, 50ms);

    // The in-progress file vanishes, so the final rename fails.
    const auto partial = h.service->storage().session_path("p001", sid).string() + ".partial";
    REQUIRE(std::filesystem::exists(partial));
    std::filesystem::remove(partial);

    cl.send(stop_session_message());
    const auto rest = until(cl, "SessionEnded");
    REQUIRE_FALSE(rest.empty());
    bool io_error = false;
    for (const auto& m : rest) io_error |= m["type"] == "Error" && m["code"] == "Io";
    CHECK(io_error);
    CHECK(rest.back()["type"] == "SessionEnded");
    CHECK(rest.back()["persisted"] == false);
    CHECK(rest.back()["status"]["reason"] == "UserStop");
    CHECK(h.service->live_sessions() == 0);
    CHECK_FALSE(h.service->storage().find_session(sid).has_value());
}

TEST_CASE("storage root resolution") {
    CHECK(resolve_storage_root(std::string("/x")) == "/x");
    setenv(kStorageEnvVar, "/from-env", 1);
    CHECK(resolve_storage_root(std::nullopt) == "/from-env");
    unsetenv(kStorageEnvVar);
    CHECK(resolve_storage_root(std::nullopt) == "storage");
    CHECK(Storage::valid_id("abc-1_2.x"));
    CHECK_FALSE(Storage::valid_id(""));
    CHECK_FALSE(Storage::valid_id(".x"));
    CHECK_FALSE(Storage::valid_id("a/b"));
    CHECK_FALSE(Storage::valid_id(std::string(129, 'a')));
}
