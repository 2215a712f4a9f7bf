// Acceptance run: one PASS/FAIL line per primary criterion.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/core.h>

#include "support.hpp"
#include "wristrehab/cli.hpp"
#include "wristrehab/codec.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/fileio.hpp"
#include "wristrehab/gamecore.hpp"
#include "wristrehab/kinematics.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/service.hpp"
#include "wristrehab/session_store.hpp"

using namespace wr;
using namespace std::chrono_literals;

namespace {

struct Verdict {
    bool ok = true;
    std::string detail;
};

/// Records the first failed expectation; later ones are ignored.
struct Check {
    bool ok = true;
    std::string first_failure;
    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            first_failure = what;
        }
    }
    Verdict verdict(std::string detail) const { return {ok, ok ? std::move(detail) : first_failure}; }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json run_cli_json(const std::vector<std::string>& args, int& code) {
    std::ostringstream out, err;
    code = run_cli(args, out, err);
    return json::parse(out.str());
}

struct ModeCase {
    GameKind kind;
    GameMode mode;
};
const std::vector<ModeCase> kModes{{GameKind::Rhythm, GameMode::Standard},      {GameKind::Flappy, GameMode::Impulse},
                                   {GameKind::Flappy, GameMode::Continuous},    {GameKind::Skiing, GameMode::Deviation},
                                   {GameKind::Skiing, GameMode::RotatedFlexion}, {GameKind::Plane, GameMode::OneHand},
                                   {GameKind::Plane, GameMode::TwoHands}};

// ---------------------------------------------------------------------------

Verdict replay_fidelity() {
    const auto t0 = std::chrono::steady_clock::now();
    test::TempDir dir;
    std::mt19937_64 rng(20240601);
    Check c;
    std::uint64_t total_ticks = 0, total_events = 0, total_digests = 0;
    for (int i = 0; i < 100; ++i) {
        const ModeCase mc = kModes[rng() % kModes.size()];
        PatientProfile p = test::profile(Handedness::Both);
        GenConstraints gc;
        gc.duration = 20.0 + static_cast<double>(rng() % 21);
        gc.element_count = static_cast<int>(gc.duration / 3.0);
        gc.min_spacing = 1.5;
        const std::uint64_t seed = rng();
        const Level level = generate_level(mc.kind, gc, p, seed);

        std::unique_ptr<FrameSource> src;
        if (i % 2 == 0) {
            AutopilotSpec a;
            a.seed = seed;
            src = std::make_unique<AutopilotSource>(level, p, mc.mode, a);
        } else {
            SyntheticSpec s;
            s.seed = seed;
            s.noise_amplitude = 2.0;
            s.duration_s = gc.duration + 5.0;
            s.left.enabled = true;
            s.right.flexion_extension = Waveform::sine(30.0, 0.5 + 0.1 * (rng() % 10));
            s.right.deviation = Waveform::sine(20.0, 0.3);
            s.left.flexion_extension = Waveform::sine(25.0, 0.7, 90.0);
            s.left.deviation = Waveform::sine(15.0, 0.4);
            src = std::make_unique<SyntheticSource>(s);
        }
        const std::string path = dir.file(fmt::format("s{}.wrsession", i));
        SessionSetup setup{fmt::format("acc{}", i), mc.kind, mc.mode, level, p, {}, "2026-01-01T00:00:00Z"};
        const SessionRun run = run_session(setup, *src, path);

        int code = 0;
        const json v = run_cli_json({"replay", "--session", path, "--verify"}, code);
        c.expect(code == kExitOk && v.value("verified", false),
                 fmt::format("session {} ({} {}) failed replay --verify: {}", i, to_string(mc.kind),
                             to_string(mc.mode), v.dump()));

        // Independent check: replayed events are the recorded ones, in order.
        std::vector<GameEvent> recorded;
        std::uint64_t recorded_digests = 0;
        for (const auto& e : run.record.entries) {
            if (const auto* ev = std::get_if<EventEntry>(&e)) recorded.push_back(ev->event);
            recorded_digests += std::holds_alternative<TickDigestEntry>(e);
        }
        const ReplayReport rep = replay(read_session_file(path));
        c.expect(rep.events == recorded, fmt::format("session {}: replayed events differ", i));
        c.expect(rep.digests_checked == recorded_digests, fmt::format("session {}: digest count differs", i));
        total_ticks += rep.ticks;
        total_events += recorded.size();
        total_digests += recorded_digests;
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 60.0, fmt::format("took {:.1f} s", secs));
    return c.verdict(fmt::format("100 sessions, {} ticks, {} events, {} digests, {:.1f} s", total_ticks, total_events,
                                 total_digests, secs));
}

// ---------------------------------------------------------------------------

constexpr long double kDeg = 180.0L / std::numbers::pi_v<long double>;

Angles closed_form(const Vec3& d) {
    const long double x = d.x, y = d.y, z = d.z;
    const long double n = std::sqrt(x * x + y * y + z * z);
    const long double fe = std::asin(std::clamp(y / n, -1.0L, 1.0L)) * kDeg;
    const long double dev = std::atan2(x / n, -z / n) * kDeg;
    return {static_cast<double>(std::clamp(fe, -90.0L, 90.0L)), static_cast<double>(std::clamp(dev, -90.0L, 90.0L))};
}

HandFrame right_hand(Vec3 direction, Vec3 palm_normal = {0, -1, 0}) {
    HandFrame f;
    f.hands.right = HandPose{Vec3{0, 20, 0}, direction, palm_normal, 1.0};
    return f;
}

Verdict kinematics_oracle() {
    double worst = 0.0;
    int points = 0;
    for (int i = 0; i < 100; ++i) {
        const double el = (-89.5 + i * (179.0 / 99.0)) * std::numbers::pi / 180.0;
        for (int j = 0; j < 100; ++j) {
            const double az = (-179.0 + j * (358.0 / 99.0)) * std::numbers::pi / 180.0;
            const Vec3 d{std::cos(el) * std::sin(az), std::sin(el), -std::cos(el) * std::cos(az)};
            const Angles got = wrist_angles(right_hand(d)).right.value();
            const Angles want = closed_form(d);
            worst = std::max({worst, std::abs(got.flexion_extension - want.flexion_extension),
                              std::abs(got.deviation - want.deviation)});
            ++points;
        }
    }
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> fe(-89.0, 89.0), dev(-89.0, 89.0);
    double worst_inverse = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Angles a{fe(rng), dev(rng)};
        const HandOrientation o = synth_inverse(a);
        const Angles back = wrist_angles(right_hand(o.hand_direction, o.palm_normal)).right.value();
        worst_inverse = std::max({worst_inverse, std::abs(back.flexion_extension - a.flexion_extension),
                                  std::abs(back.deviation - a.deviation)});
    }
    Check c;
    c.expect(points == 10000, "sweep size");
    c.expect(worst < 0.01, fmt::format("closed form error {:.3g} deg", worst));
    c.expect(worst_inverse < 0.01, fmt::format("inverse round trip error {:.3g} deg", worst_inverse));
    return c.verdict(fmt::format("{} points, max error {:.2g} deg, inverse max error {:.2g} deg", points, worst,
                                 worst_inverse));
}

// ---------------------------------------------------------------------------

std::vector<double> brute_force_events(const std::vector<AngleSample>& s, const GestureSpec& spec) {
    const double dir = spec.kind == GestureKind::Press ? -1.0 : 1.0;
    std::vector<double> events;
    std::optional<double> last;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (last && s[i].timestamp_ms - *last < spec.refractory) continue;
        if (dir * s[i].angle < spec.trigger_angle) continue;
        bool fired = false;
        for (std::size_t j = 0; j < i && !fired; ++j) {
            if (s[i].timestamp_ms - s[j].timestamp_ms > spec.max_duration) continue;
            bool monotone = true;
            for (std::size_t k = j + 1; k <= i && monotone; ++k)
                if (dir * (s[k].angle - s[k - 1].angle) < 0.0) monotone = false;
            if (monotone && dir * (s[i].angle - s[j].angle) >= spec.min_sweep) fired = true;
        }
        if (fired) {
            events.push_back(s[i].timestamp_ms);
            last = s[i].timestamp_ms;
        }
    }
    return events;
}

std::vector<double> detector_events(const std::vector<AngleSample>& s, const GestureSpec& spec) {
    GestureDetector det(Hand::Right, spec);
    std::vector<double> events;
    for (const auto& x : s)
        if (auto e = det.push(x.timestamp_ms, x.angle)) events.push_back(e->timestamp_ms);
    return events;
}

Verdict gesture_oracle() {
    Check c;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> level(-60.0, 60.0), seg(30.0, 400.0), jitter(-0.5, 0.5);
    std::size_t total = 0;
    constexpr int kSignals = 1000;
    for (int n = 0; n < kSignals; ++n) {
        std::vector<std::pair<double, double>> knots{{0.0, level(rng)}};
        while (knots.back().first < 3000.0) knots.push_back({knots.back().first + seg(rng), level(rng)});
        std::vector<AngleSample> s;
        std::size_t k = 0;
        for (double t = 0.0; t <= 3000.0; t += 10.0 + jitter(rng)) {
            while (knots[k + 1].first < t) ++k;
            const auto [t0, a0] = knots[k];
            const auto [t1, a1] = knots[k + 1];
            s.push_back({t, a0 + (a1 - a0) * (t - t0) / (t1 - t0)});
        }
        GestureSpec spec;
        spec.kind = n % 2 ? GestureKind::Press : GestureKind::Flap;
        const auto got = detector_events(s, spec);
        c.expect(got == brute_force_events(s, spec), fmt::format("signal {} disagrees with the oracle", n));
        total += got.size();
    }
    c.expect(total > 500, "oracle comparison is vacuous");

    std::vector<AngleSample> sine;
    for (int i = 0; i < 1000; ++i) {
        const double t = i * 10.0;
        sine.push_back({t, 30.0 * std::sin(2.0 * std::numbers::pi * t / 1000.0)});
    }
    const auto presses = detector_events(sine, GestureSpec{});
    c.expect(presses.size() == 10, fmt::format("sinusoid gave {} presses", presses.size()));
    return c.verdict(fmt::format("{} signals, {} events agree; sinusoid gives {} presses", kSignals, total,
                                 presses.size()));
}

// ---------------------------------------------------------------------------

double min_gap(const Level& l) {
    double g = 1e300;
    for (std::size_t i = 1; i < l.elements.size(); ++i)
        g = std::min(g, element_time(l.elements[i]) - element_time(l.elements[i - 1]));
    return g;
}

/// Element positions must map from angles inside the scaled ROM.
bool within_rom(const Element& e, const PatientProfile& p, double rf) {
    const double tol = 1e-9;
    const double fl = rf * p.rom_flexion_max, ex = rf * p.rom_extension_max;
    const double dl = rf * p.rom_deviation_left_max, dr = rf * p.rom_deviation_right_max;
    const double hlo = map_continuous_height(-fl, p.rom_flexion_max, p.rom_extension_max);
    const double hhi = map_continuous_height(ex, p.rom_flexion_max, p.rom_extension_max);
    const double llo = map_lateral(-dl, p.rom_deviation_left_max, p.rom_deviation_right_max);
    const double lhi = map_lateral(dr, p.rom_deviation_left_max, p.rom_deviation_right_max);
    if (const auto* pipe = std::get_if<FlappyPipe>(&e)) return pipe->gap_center >= hlo - tol && pipe->gap_center <= hhi + tol;
    if (const auto* gate = std::get_if<SkiGate>(&e)) return gate->center >= llo - tol && gate->center <= lhi + tol;
    if (const auto* ring = std::get_if<PlaneRing>(&e))
        return ring->center_yaw >= llo - tol && ring->center_yaw <= lhi + tol &&
               ring->center_pitch >= 2.0 * hlo - 1.0 - tol && ring->center_pitch <= 2.0 * hhi - 1.0 + tol;
    return true;
}

Verdict generator_soundness() {
    Check c;
    PatientProfile p = test::profile(Handedness::Both);
    p.rom_extension_max = 35.0;
    p.rom_flexion_max = 50.0;
    p.rom_deviation_left_max = 20.0;
    p.rom_deviation_right_max = 30.0;
    GenConstraints gc;
    gc.duration = 90.0;
    gc.element_count = 25;
    gc.min_spacing = 1.5;
    gc.rom_fraction = 0.8;
    int levels = 0;
    for (GameKind kind : {GameKind::Rhythm, GameKind::Flappy, GameKind::Skiing, GameKind::Plane}) {
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const Level l = generate_level(kind, gc, p, seed);
            const std::string where = fmt::format("{} seed {}", to_string(kind), seed);
            c.expect(validate_level(l, p).empty(), where + ": invalid level");
            c.expect(save_level(l) == save_level(generate_level(kind, gc, p, seed)), where + ": not deterministic");
            c.expect(static_cast<int>(l.elements.size()) == gc.element_count, where + ": element count");
            c.expect(min_gap(l) >= gc.min_spacing - 1e-9, where + ": spacing");
            c.expect(element_time(l.elements.back()) <= l.duration, where + ": past the end");
            for (const auto& e : l.elements) c.expect(within_rom(e, p, gc.rom_fraction), where + ": outside ROM");
            ++levels;
        }
    }
    return c.verdict(fmt::format("{} levels valid, deterministic, spaced and within ROM", levels));
}

// ---------------------------------------------------------------------------

Verdict adaptation_semantics() {
    Check c;
    const PatientProfile p = test::profile();  // window 5, threshold 0.6, max 3, grace 1000 ms

    // A rhythm level nobody plays: every note is a miss.
    std::vector<double> notes;
    for (int i = 1; i <= 30; ++i) notes.push_back(2.0 * i);
    GameState s = new_game(GameKind::Rhythm, GameMode::Standard,
                           std::make_shared<const Level>(test::rhythm_level(notes, Hand::Right, 70.0)),
                           std::make_shared<const PatientProfile>(p));
    TickInput rest;
    rest.angles.right = Angles{0, 0};
    rest.palms.right = Vec3{10, 20, 0};
    int misses = 0;
    std::vector<int> adapted_after;
    DifficultyScalars prev = s.scalars;
    std::optional<StopReason> stop;
    while (s.status.state == RunState::Running && s.elapsed_ms < 200000) {
        auto r = tick(s, rest, kTickMs);
        for (const auto& e : r.events) {
            misses += std::holds_alternative<MissEvent>(e.data);
            if (std::holds_alternative<AdaptedEvent>(e.data)) adapted_after.push_back(misses);
        }
        s = std::move(r.state);
        c.expect(s.scalars.speed <= prev.speed && s.scalars.hit_window_ms >= prev.hit_window_ms &&
                     s.scalars.extent_scale >= prev.extent_scale && s.scalars.gravity <= prev.gravity &&
                     s.scalars.impulse_velocity <= prev.impulse_velocity,
                 "a challenge scalar increased");
        prev = s.scalars;
    }
    if (s.status.state == RunState::Stopped) stop = s.status.reason;
    c.expect(adapted_after == std::vector<int>{5, 10, 15}, "Adapted did not fire after misses 5, 10 and 15");
    c.expect(misses == 20, fmt::format("stopped after {} misses, expected 20", misses));
    c.expect(stop == StopReason::AdaptExhausted, "exhaustion did not stop with AdaptExhausted");

    // Mixed script: two misses in a window stay below 0.6, three reach it.
    GameState m = new_game(GameKind::Rhythm, GameMode::Standard, s.level, s.profile);
    const std::vector<bool> script{true, false, true, false, false, false, true, true, true, false};
    std::vector<std::size_t> fired;
    for (std::size_t i = 0; i < script.size(); ++i) {
        m.perf.push(script[i]);
        if (adapt(m, p.adaptation_policy)) fired.push_back(i);
    }
    c.expect(fired == std::vector<std::size_t>{8}, "scripted window fired at the wrong index");

    // 1200 ms beyond extension with 1000 ms grace.
    GameState v = new_game(GameKind::Rhythm, GameMode::Standard,
                           std::make_shared<const Level>(test::rhythm_level({30.0})),
                           std::make_shared<const PatientProfile>(p));
    TickInput over = rest;
    over.angles.right = Angles{p.rom_extension_max + 10.0, 0};
    bool safety_event = false;
    for (int i = 0; i < 120 && v.status.state == RunState::Running; ++i) {
        auto r = tick(v, over, kTickMs);
        for (const auto& e : r.events) safety_event |= std::holds_alternative<SafetyStopEvent>(e.data);
        v = std::move(r.state);
    }
    c.expect(safety_event && v.status.reason == StopReason::SafetyStop, "ROM violation did not SafetyStop");
    c.expect(v.elapsed_ms > 1000 && v.elapsed_ms <= 1200, fmt::format("SafetyStop at {} ms", v.elapsed_ms));
    return c.verdict(fmt::format("Adapted after misses 5/10/15, AdaptExhausted after 20, SafetyStop at {} ms",
                                 v.elapsed_ms));
}

// ---------------------------------------------------------------------------

double hit_rate(GameKind kind, GameMode mode, const Level& level, const PatientProfile& p, std::uint64_t seed) {
    AutopilotSpec a;
    a.seed = seed;
    AutopilotSource src(level, p, mode, a);
    const SessionRun run = run_session(SessionSetup{"tune", kind, mode, level, p, {}, "t"}, src);
    const SessionStats st = statistics(run.record);
    return static_cast<double>(st.hits) / static_cast<double>(st.hits + st.misses);
}

Verdict tuning_reproduction() {
    Check c;
    // Adaptation off so the comparison is between the levels alone.
    PatientProfile p = test::profile();
    p.session_length = 1800.0;
    p.adaptation_policy.max_adaptations = 0;
    p.adaptation_policy.stop_after_exhausted = false;
    std::string detail;
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        GenConstraints rc;
        rc.duration = 120.0;
        rc.min_spacing = 0.6;
        rc.element_count = 199;
        const Level base = generate_level(GameKind::Rhythm, rc, p, seed);
        Level wide = base;
        wide.gen_seed.reset();
        wide.constraints_snapshot.reset();
        wide.duration = 2.0 * base.duration;
        for (auto& e : wide.elements) std::get<RhythmNote>(e).time *= 2.0;
        const double r0 = hit_rate(GameKind::Rhythm, GameMode::Standard, base, p, seed);
        const double r1 = hit_rate(GameKind::Rhythm, GameMode::Standard, wide, p, seed);

        GenConstraints sc;
        sc.duration = 120.0;
        sc.element_count = 60;
        sc.min_spacing = 1.5;
        sc.gate_width = 0.2;
        const Level narrow = generate_level(GameKind::Skiing, sc, p, seed);
        sc.gate_width = 0.3;
        const Level wider = generate_level(GameKind::Skiing, sc, p, seed);
        const double s0 = hit_rate(GameKind::Skiing, GameMode::Deviation, narrow, p, seed);
        const double s1 = hit_rate(GameKind::Skiing, GameMode::Deviation, wider, p, seed);

        c.expect(r1 - r0 >= 0.10, fmt::format("seed {}: rhythm {:.1f}% -> {:.1f}%", seed, 100 * r0, 100 * r1));
        c.expect(s1 - s0 >= 0.10, fmt::format("seed {}: skiing {:.1f}% -> {:.1f}%", seed, 100 * s0, 100 * s1));
        detail += fmt::format("{}seed {}: rhythm {:.1f}->{:.1f}%, skiing {:.1f}->{:.1f}%", detail.empty() ? "" : "; ",
                              seed, 100 * r0, 100 * r1, 100 * s0, 100 * s1);
    }
    return c.verdict(detail);
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> line_ends(const std::string& bytes) {
    std::vector<std::size_t> ends;
    for (std::size_t i = 0; i < bytes.size(); ++i)
        if (bytes[i] == '\n') ends.push_back(i + 1);
    return ends;
}

Verdict format_integrity() {
    Check c;
    std::mt19937_64 rng(5);

    // Profiles and levels: document -> value -> document is the identity.
    int docs = 0;
    for (int i = 0; i < 200; ++i) {
        PatientProfile p = test::profile(static_cast<Handedness>(i % 3));
        p.rom_flexion_max = 20.0 + (rng() % 600) / 10.0;
        p.safety_grace = static_cast<double>(rng() % 3000);
        const std::string pd = save_profile(p);
        c.expect(save_profile(load_profile(pd)) == pd && load_profile(pd) == p, "profile round trip");
        GenConstraints gc;
        gc.duration = 30.0;
        gc.element_count = 8;
        gc.min_spacing = 2.0;
        const GameKind kind = static_cast<GameKind>(i % 4);
        const std::string ld = save_level(generate_level(kind, gc, p, rng()));
        c.expect(save_level(load_level(ld)) == ld, "level round trip");
        docs += 2;
    }

    // A short recorded session.
    SyntheticSpec spec;
    spec.right.flexion_extension = Waveform::sine(30, 1);
    spec.noise_amplitude = 1.5;
    spec.seed = 9;
    spec.duration_s = 1.5;
    SyntheticSource src(spec);
    const SessionRun run = run_session(
        SessionSetup{"fmt", GameKind::Rhythm, GameMode::Standard, test::rhythm_level({0.5, 1.0}, Hand::Right, 5.0),
                     test::profile(), {}, "2026-01-01T00:00:00Z"},
        src);
    const std::string& bytes = run.bytes;
    c.expect(serialize_session(parse_session(bytes)) == bytes, "session round trip");

    // Every byte position, corrupted once.
    std::size_t detected = 0;
    for (std::size_t pos = 0; pos < bytes.size(); ++pos) {
        std::string bad = bytes;
        bad[pos] = static_cast<char>(bad[pos] ^ static_cast<char>(1 + rng() % 255));
        try {
            parse_session(bad);
        } catch (const Error& e) {
            detected += e.code() == ErrorCode::DigestMismatch;
        }
    }
    c.expect(detected == bytes.size(), fmt::format("{} of {} corruptions detected", detected, bytes.size()));

    // Truncation at every line boundary and at random points inside lines.
    const auto ends = line_ends(bytes);  // header, entries..., footer
    std::vector<std::size_t> cuts;
    for (std::size_t e : ends) cuts.push_back(e);
    for (int i = 0; i < 300; ++i) cuts.push_back(rng() % bytes.size());
    for (std::size_t cut : cuts) {
        const RecoveredSession rec = recover_session(std::string_view(bytes).substr(0, cut));
        const std::size_t complete = std::upper_bound(ends.begin(), ends.end(), cut) - ends.begin();
        const bool whole = cut == bytes.size();
        const std::size_t want = whole ? run.record.entries.size()
                                       : std::min<std::size_t>(complete > 0 ? complete - 1 : 0,
                                                               run.record.entries.size());
        c.expect(rec.header.has_value() == (complete > 0), fmt::format("cut {}: header", cut));
        c.expect(rec.entries.size() == want, fmt::format("cut {}: recovered {} of {} entries", cut,
                                                          rec.entries.size(), want));
        for (std::size_t i = 0; i < std::min(rec.entries.size(), want); ++i)
            if (rec.entries[i] != run.record.entries[i]) {
                c.expect(false, fmt::format("cut {}: entry {} differs", cut, i));
                break;
            }
        c.expect(rec.footer.has_value() == whole, fmt::format("cut {}: footer", cut));
    }
    return c.verdict(fmt::format("{} documents round-trip, {}/{} corruptions detected, {} truncations recovered",
                                 docs, detected, bytes.size(), cuts.size()));
}

// ---------------------------------------------------------------------------

struct StreamResult {
    std::string session_id;
    std::string final_type;
    bool gap_free = true;
    int errors = 0;
    std::string reason;
};

/// Streams frames [0, count) of `spec` through a live client and stops.
StreamResult stream_session(Service& svc, const SyntheticSpec& spec, std::uint64_t count) {
    StreamResult res;
    LiveClient cl = LiveClient::connect("127.0.0.1", svc.stream_port());
    std::int64_t next = 1;
    auto take = [&](const json& m) {
        if (m["seq"].get<std::int64_t>() != next) res.gap_free = false;
        ++next;
        if (m["type"] == "Error") ++res.errors;
        res.final_type = m["type"];
        if (m["type"] == "SessionEnded") res.reason = m["status"]["reason"];
    };
    json start = start_session_message("p1", "lv1", GameKind::Rhythm, GameMode::Standard);
    start["snapshot_every"] = 10;
    cl.send(start);
    const auto first = cl.receive(10s);
    if (!first) return res;
    take(*first);
    res.session_id = (*first)["session_id"];
    for (std::uint64_t i = 0; i < count; ++i) {
        cl.send(input_frame_message(synthetic_frame(spec, i)));
        if (i % 100 == 99)
            while (auto m = cl.receive(1ms)) take(*m);
    }
    cl.send(stop_session_message());
    while (auto m = cl.receive(20s)) {
        take(*m);
        if ((*m)["type"] == "SessionEnded") break;
    }
    return res;
}

bool verify_persisted(Service& svc, const std::string& sid, std::int64_t& ticks) {
    const auto info = svc.storage().find_session(sid);
    if (!info) return false;
    int code = 0;
    const json v = run_cli_json({"replay", "--session", info->path.string(), "--verify"}, code);
    ticks = v.value("ticks", std::int64_t{0});
    return code == kExitOk && v.value("verified", false);
}

Verdict service_end_to_end() {
    Check c;
    test::TempDir dir;
    ServiceConfig cfg;
    cfg.storage_root = dir.path() / "store";
    cfg.http_port = 0;
    cfg.stream_port = 0;
    Service svc(cfg);
    svc.start();
    svc.storage().put_profile("p1", test::profile());
    std::vector<double> notes;
    for (int i = 1; i <= 80; ++i) notes.push_back(i * 1.0);
    svc.storage().put_level("lv1", test::rhythm_level(notes, Hand::Right, 90.0));

    SyntheticSpec spec;
    spec.right.flexion_extension = Waveform::sine(30, 1);
    spec.noise_amplitude = 1.0;
    spec.seed = 1;
    const StreamResult one = stream_session(svc, spec, 6000);  // 60 s at 100 Hz
    c.expect(one.final_type == "SessionEnded" && one.reason == "UserStop",
             fmt::format("single session ended with {} {}", one.final_type, one.reason));
    c.expect(one.gap_free && one.errors == 0, "single session stream had gaps or errors");
    std::int64_t ticks = 0;
    c.expect(verify_persisted(svc, one.session_id, ticks), "single session failed replay --verify");
    c.expect(ticks >= 5990, fmt::format("single session replayed {} ticks", ticks));

    constexpr int kClients = 8;
    std::vector<StreamResult> results(kClients);
    std::vector<std::thread> threads;
    for (int k = 0; k < kClients; ++k)
        threads.emplace_back([&, k] {
            SyntheticSpec s = spec;
            s.seed = 100 + k;
            s.right.flexion_extension = Waveform::sine(30, 1, 10.0 * k);
            results[k] = stream_session(svc, s, 2000);
        });
    for (auto& t : threads) t.join();
    int completed = 0;
    for (int k = 0; k < kClients; ++k) {
        std::int64_t t = 0;
        const bool ok = results[k].final_type == "SessionEnded" && results[k].reason == "UserStop" &&
                        results[k].gap_free && results[k].errors == 0 &&
                        verify_persisted(svc, results[k].session_id, t);
        completed += ok;
        c.expect(ok, fmt::format("concurrent client {} did not complete cleanly", k));
    }
    svc.stop();
    return c.verdict(fmt::format("60 s session verified ({} ticks); {}/{} concurrent sessions completed and verified",
                                 ticks, completed, kClients));
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"replay fidelity", replay_fidelity},
        {"kinematics oracle", kinematics_oracle},
        {"gesture oracle", gesture_oracle},
        {"generator soundness and determinism", generator_soundness},
        {"adaptation semantics", adaptation_semantics},
        {"tuning reproduction", tuning_reproduction},
        {"format integrity", format_integrity},
        {"service end to end", service_end_to_end},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.ok;
        std::cout << fmt::format("{} {}: {} [{:.1f} s]", v.ok ? "PASS" : "FAIL", name, v.detail, seconds_since(t0))
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
