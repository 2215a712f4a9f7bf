#include <doctest.h>

#include <random>
#include <set>

#include "support.hpp"
#include "wristrehab/codec.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/gamecore.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/profiles.hpp"

using namespace wr;

namespace {

bool has_field(const Violations& v, const std::string& field) {
    for (const auto& x : v)
        if (x.field == field || x.field.find(field) != std::string::npos || x.message.find(field) != std::string::npos)
            return true;
    return false;
}

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::Io;
}

PatientProfile random_profile(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> rom(5.0, 90.0), len(30.0, 1800.0), u(0.0, 1.0);
    PatientProfile p;
    p.patient_id = "p" + std::to_string(rng() % 1000);
    p.handedness = static_cast<Handedness>(rng() % 3);
    p.rom_extension_max = rom(rng);
    p.rom_flexion_max = rom(rng);
    p.rom_deviation_left_max = rom(rng);
    p.rom_deviation_right_max = rom(rng);
    p.session_length = len(rng);
    p.gesture_spec.min_sweep = 5.0 + 40.0 * u(rng);
    p.gesture_spec.refractory = 500.0 * u(rng);
    p.hand_distance_band = {5.0 + 10.0 * u(rng), 20.0 + 30.0 * u(rng)};
    p.safety_grace = 3000.0 * u(rng);
    p.adaptation_policy.miss_window = 1 + static_cast<int>(rng() % 10);
    p.adaptation_policy.miss_threshold = 0.05 + 0.95 * u(rng);
    p.adaptation_policy.ease_factor = 0.05 + 0.9 * u(rng);
    p.adaptation_policy.max_adaptations = static_cast<int>(rng() % 6);
    p.adaptation_policy.stop_after_exhausted = rng() % 2;
    p.ski_rotated_sign = rng() % 2 ? 1 : -1;
    return p;
}

double min_gap(const Level& l) {
    double g = 1e300;
    for (std::size_t i = 1; i < l.elements.size(); ++i)
        g = std::min(g, element_time(l.elements[i]) - element_time(l.elements[i - 1]));
    return g;
}

/// Largest angle an element demands, by forward mapping of the extents.
bool within_rom(const Element& e, const PatientProfile& p, double rf) {
    const double tol = 1e-9;
    const double fl = rf * p.rom_flexion_max, ex = rf * p.rom_extension_max;
    const double dl = rf * p.rom_deviation_left_max, dr = rf * p.rom_deviation_right_max;
    if (const auto* pipe = std::get_if<FlappyPipe>(&e)) {
        // Some height inside the gap must map from an angle inside the scaled ROM.
        const double lo = map_continuous_height(-fl, p.rom_flexion_max, p.rom_extension_max);
        const double hi = map_continuous_height(ex, p.rom_flexion_max, p.rom_extension_max);
        return pipe->gap_center >= lo - tol && pipe->gap_center <= hi + tol;
    }
    if (const auto* gate = std::get_if<SkiGate>(&e)) {
        const double lo = map_lateral(-dl, p.rom_deviation_left_max, p.rom_deviation_right_max);
        const double hi = map_lateral(dr, p.rom_deviation_left_max, p.rom_deviation_right_max);
        return gate->center >= lo - tol && gate->center <= hi + tol;
    }
    if (const auto* ring = std::get_if<PlaneRing>(&e)) {
        const double ylo = map_lateral(-dl, p.rom_deviation_left_max, p.rom_deviation_right_max);
        const double yhi = map_lateral(dr, p.rom_deviation_left_max, p.rom_deviation_right_max);
        const double plo = 2.0 * map_continuous_height(-fl, p.rom_flexion_max, p.rom_extension_max) - 1.0;
        const double phi = 2.0 * map_continuous_height(ex, p.rom_flexion_max, p.rom_extension_max) - 1.0;
        return ring->center_yaw >= ylo - tol && ring->center_yaw <= yhi + tol && ring->center_pitch >= plo - tol &&
               ring->center_pitch <= phi + tol;
    }
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Profiles

TEST_CASE("profile validation") {
    CHECK(validate_profile(PatientProfile{}).empty());

    PatientProfile p;
    p.rom_extension_max = 0.0;
    CHECK(has_field(validate_profile(p), "rom_extension_max"));

    p = {};
    p.session_length = 10.0;
    CHECK(has_field(validate_profile(p), "session_length"));

    p = {};
    p.rom_deviation_left_max = 91.0;
    p.adaptation_policy.ease_factor = 1.0;
    p.hand_distance_band = {30.0, 15.0};
    const auto v = validate_profile(p);
    CHECK(v.size() == 3);
    CHECK(has_field(v, "rom_deviation_left_max"));
    CHECK(has_field(v, "adaptation_policy.ease_factor"));
    CHECK(has_field(v, "hand_distance_band"));
}

TEST_CASE("profile documents: strict schema and round-trip") {
    const std::string doc = save_profile(PatientProfile{});
    CHECK(load_profile(doc) == PatientProfile{});

    json j = json::parse(doc);
    j.erase("rom_extension_max");
    try {
        load_profile(j.dump());
        FAIL("missing field accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("rom_extension_max") != std::string::npos);
    }

    j = json::parse(doc);
    j["foo"] = 1;
    try {
        load_profile(j.dump());
        FAIL("unknown field accepted");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("foo") != std::string::npos);
    }

    j = json::parse(doc);
    j["rom_flexion_max"] = "forty";
    CHECK(code_of([&] { load_profile(j.dump()); }) == ErrorCode::ParseError);
    CHECK(code_of([&] { load_profile("{not json"); }) == ErrorCode::ParseError);

    std::mt19937_64 rng(99);
    for (int i = 0; i < 500; ++i) {
        const PatientProfile p = random_profile(rng);
        REQUIRE(validate_profile(p).empty());
        const std::string bytes = save_profile(p);
        const PatientProfile back = load_profile(bytes);
        CHECK(back == p);
        CHECK(save_profile(back) == bytes);
    }
}

// ---------------------------------------------------------------------------
// Levels

TEST_CASE("validate_level rules") {
    const PatientProfile p = test::profile(Handedness::Both);
    CHECK(validate_level(test::rhythm_level({1.0, 2.0}), p).empty());

    // 50 ms apart is below the 300 ms human minimum.
    CHECK(has_field(validate_level(test::rhythm_level({1.0, 1.05}), p), "spacing"));

    Level ski;
    ski.kind = GameKind::Skiing;
    ski.duration = 10.0;
    ski.elements = {SkiGate{1.0, 1.5, 0.3}};
    CHECK(has_field(validate_level(ski, p), "center out of range"));

    Level late = test::rhythm_level({1.0, 2.0});
    late.duration = 1.5;
    CHECK_FALSE(validate_level(late, p).empty());

    Level unordered = test::rhythm_level({2.0, 1.0}, Hand::Right, 5.0);
    CHECK_FALSE(validate_level(unordered, p).empty());

    // Lane the patient cannot use.
    CHECK_FALSE(validate_level(test::rhythm_level({1.0}, Hand::Left), test::profile(Handedness::Right)).empty());

    Level mixed = test::rhythm_level({1.0});
    mixed.elements.push_back(FlappyPipe{2.0, 0.5, 0.3});
    mixed.duration = 3.0;
    CHECK_FALSE(validate_level(mixed, p).empty());
}

TEST_CASE("generate_level worked examples") {
    const PatientProfile p = test::profile();
    GenConstraints c;
    c.duration = 60.0;
    c.element_count = 10;
    c.min_spacing = 2.0;
    const Level ski = generate_level(GameKind::Skiing, c, p, 42);
    CHECK(ski.elements.size() == 10);
    CHECK(validate_level(ski, p).empty());
    CHECK(save_level(ski) == save_level(generate_level(GameKind::Skiing, c, p, 42)));
    CHECK(ski.gen_seed == 42u);
    CHECK(ski.constraints_snapshot == c);
    for (const auto& e : ski.elements) CHECK(within_rom(e, p, 1.0));

    c.element_count = 1;
    const Level one = generate_level(GameKind::Rhythm, c, p, 1);
    REQUIRE(one.elements.size() == 1);
    CHECK(element_time(one.elements[0]) >= 0.0);

    c.element_count = 100;
    CHECK(code_of([&] { generate_level(GameKind::Rhythm, c, p, 1); }) == ErrorCode::InfeasibleConstraints);

    c = {};
    c.rom_fraction = 0.0;
    CHECK(code_of([&] { generate_level(GameKind::Flappy, c, p, 1); }) == ErrorCode::InvalidConstraints);
    c = {};
    c.gate_width = 0.3;
    CHECK(code_of([&] { generate_level(GameKind::Rhythm, c, p, 1); }) == ErrorCode::InvalidConstraints);
}

TEST_CASE("generator soundness over 1000 seeds per game") {
    std::mt19937_64 rng(1);
    const std::array<GameKind, 4> kinds{GameKind::Rhythm, GameKind::Flappy, GameKind::Skiing, GameKind::Plane};
    for (GameKind kind : kinds) {
        PatientProfile p = test::profile(Handedness::Both);
        p.rom_extension_max = 35.0;
        p.rom_flexion_max = 50.0;
        p.rom_deviation_left_max = 20.0;
        p.rom_deviation_right_max = 30.0;
        GenConstraints c;
        c.duration = 90.0;
        c.element_count = 25;
        c.min_spacing = 1.5;
        c.rom_fraction = 0.8;
        std::set<std::string> distinct;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const Level l = generate_level(kind, c, p, seed);
            const std::string bytes = save_level(l);
            CHECK(validate_level(l, p).empty());
            CHECK(bytes == save_level(generate_level(kind, c, p, seed)));
            CHECK(l.elements.size() == 25);
            CHECK(min_gap(l) >= c.min_spacing - 1e-9);
            CHECK(element_time(l.elements.back()) <= l.duration);
            for (const auto& e : l.elements) CHECK(within_rom(e, p, c.rom_fraction));
            distinct.insert(bytes);
        }
        CHECK(distinct.size() == 1000);
    }
}

TEST_CASE("dense constraints place a tight block") {
    const PatientProfile p = test::profile();
    GenConstraints c;
    c.duration = 10.0;
    c.element_count = 10;
    c.min_spacing = 1.0;  // stride equals spacing
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Level l = generate_level(GameKind::Flappy, c, p, seed);
        CHECK(validate_level(l, p).empty());
        CHECK(min_gap(l) >= 1.0 - 1e-9);
    }
}

TEST_CASE("level documents round-trip and reject bad input") {
    const PatientProfile p = test::profile(Handedness::Both);
    GenConstraints c;
    c.element_count = 12;
    for (GameKind kind : {GameKind::Rhythm, GameKind::Flappy, GameKind::Skiing, GameKind::Plane}) {
        const Level l = generate_level(kind, c, p, 7);
        const std::string bytes = save_level(l);
        const Level back = load_level(bytes);
        CHECK(back == l);
        CHECK(save_level(back) == bytes);
    }
    json j = json::parse(save_level(test::rhythm_level({1.0})));
    CHECK_FALSE(j.contains("gen_seed"));
    CHECK_NOTHROW(load_level(j.dump()));
    j["game_kind"] = "Tennis";
    CHECK(code_of([&] { load_level(j.dump()); }) == ErrorCode::ParseError);
}

TEST_CASE("authoring edits") {
    Level empty = author_level(GameKind::Plane, {});
    CHECK(empty.kind == GameKind::Plane);
    CHECK(empty.elements.empty());
    CHECK(empty.duration == 0.0);

    std::vector<LevelEdit> edits{AddElement{RhythmNote{1.0, Hand::Right}}, AddElement{RhythmNote{2.0, Hand::Right}},
                                 AddElement{RhythmNote{3.0, Hand::Right}}, SetDuration{5.0}, DeleteElement{1}};
    Level l = author_level(GameKind::Rhythm, edits);
    REQUIRE(l.elements.size() == 2);
    CHECK(element_time(l.elements[0]) == 1.0);
    CHECK(element_time(l.elements[1]) == 3.0);
    CHECK(validate_level(l, test::profile()).empty());

    Level moved = apply_edits(l, {MoveElement{1, 9.0}});
    CHECK(element_time(moved.elements[1]) == 9.0);
    CHECK_FALSE(validate_level(moved, test::profile()).empty());

    CHECK(code_of([&] { apply_edits(l, {DeleteElement{5}}); }) == ErrorCode::IndexOutOfRange);
    CHECK(code_of([&] { apply_edits(l, {AddElement{SkiGate{}}}); }) == ErrorCode::InvalidArgument);

    // Editing a generated level drops its provenance.
    const Level gen = generate_level(GameKind::Rhythm, GenConstraints{}, test::profile(), 3);
    const Level edited = apply_edits(gen, {SetDuration{70.0}});
    CHECK_FALSE(edited.gen_seed.has_value());
    CHECK_FALSE(edited.constraints_snapshot.has_value());
}

TEST_CASE("edit scripts") {
    const LevelScript s = load_level_script(
        R"({"game_kind":"Skiing","edits":[{"op":"add","element":{"time":1.0,"center":0.2,"width":0.3}},)"
        R"({"op":"set_duration","duration":4.0}]})");
    CHECK(s.kind == GameKind::Skiing);
    const Level l = author_level(s.kind, s.edits);
    CHECK(l.elements.size() == 1);
    CHECK(l.duration == 4.0);
    CHECK(code_of([] { load_level_script(R"({"game_kind":"Skiing","edits":[{"op":"jump"}]})"); }) ==
          ErrorCode::ParseError);
}
