#include "wristrehab/levelgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json_util.hpp"
#include "wristrehab/codec.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/fileio.hpp"
#include "wristrehab/gamecore.hpp"
#include "wristrehab/rng.hpp"

namespace wr {

using detail::json;
using detail::ObjectReader;

namespace {

constexpr double kTolerance = 1e-9;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string elem_path(std::size_t i, std::string_view field = {}) {
    std::string p = "elements[" + std::to_string(i) + "]";
    if (!field.empty()) p += "." + std::string(field);
    return p;
}

bool in_range(double v, double lo, double hi) {
    return std::isfinite(v) && v >= lo - kTolerance && v <= hi + kTolerance;
}

double rom_fraction_of(const Level& level) {
    return level.constraints_snapshot ? level.constraints_snapshot->rom_fraction : 1.0;
}

Handedness lanes_for(const GenConstraints& c, const PatientProfile& profile) {
    return c.lanes.value_or(profile.handedness);
}

bool lane_allowed(Hand lane, Handedness allowed) {
    return allowed == Handedness::Both || (lane == Hand::Left) == (allowed == Handedness::Left);
}

// A press needs flexion beyond the trigger angle after a sweep of min_sweep,
// all within the allowed fraction of the patient's range.
bool press_reachable(const PatientProfile& p, double rom_fraction) {
    const auto& g = p.gesture_spec;
    return rom_fraction * p.rom_flexion_max >= g.trigger_angle - kTolerance &&
           rom_fraction * (p.rom_flexion_max + p.rom_extension_max) >= g.min_sweep - kTolerance;
}

// Requested angle must lie inside [-fraction * rom_neg, fraction * rom_pos].
bool angle_within(double angle, double rom_neg, double rom_pos, double rom_fraction) {
    return angle >= -rom_fraction * rom_neg - kTolerance && angle <= rom_fraction * rom_pos + kTolerance;
}

struct Band {
    double lo = 0.0;
    double hi = 0.0;
    bool empty() const { return lo > hi; }
};

}  // namespace

std::string_view to_string(GameKind kind) {
    switch (kind) {
        case GameKind::Rhythm: return "Rhythm";
        case GameKind::Flappy: return "Flappy";
        case GameKind::Skiing: return "Skiing";
        case GameKind::Plane: return "Plane";
    }
    return "Rhythm";
}

std::optional<GameKind> game_kind_from_string(std::string_view text) {
    if (text == "Rhythm") return GameKind::Rhythm;
    if (text == "Flappy") return GameKind::Flappy;
    if (text == "Skiing") return GameKind::Skiing;
    if (text == "Plane") return GameKind::Plane;
    return std::nullopt;
}

double element_time(const Element& e) {
    return std::visit([](const auto& el) { return el.time; }, e);
}

GameKind element_kind(const Element& e) {
    return std::visit(Overloaded{
                          [](const RhythmNote&) { return GameKind::Rhythm; },
                          [](const FlappyPipe&) { return GameKind::Flappy; },
                          [](const SkiGate&) { return GameKind::Skiing; },
                          [](const PlaneRing&) { return GameKind::Plane; },
                      },
                      e);
}

// ---------------------------------------------------------------------------
// Validation

Violations validate_constraints(GameKind kind, const GenConstraints& c) {
    Violations out;
    if (!(std::isfinite(c.duration) && c.duration > 0.0)) out.push_back({"duration", "must be > 0"});
    if (c.element_count < 1) out.push_back({"element_count", "must be >= 1"});
    if (!(c.rom_fraction > 0.0 && c.rom_fraction <= 1.0))
        out.push_back({"rom_fraction", "must be in (0, 1]"});
    if (!(std::isfinite(c.min_spacing) && c.min_spacing >= kMinHumanSpacing))
        out.push_back({"min_spacing", "must be >= " + std::to_string(kMinHumanSpacing) + " s"});

    auto extra = [&](bool present, GameKind owner, const char* field) {
        if (present && kind != owner) out.push_back({field, "not applicable to " + std::string(to_string(kind))});
    };
    extra(c.lanes.has_value(), GameKind::Rhythm, "lanes");
    extra(c.gap_height.has_value(), GameKind::Flappy, "gap_height");
    extra(c.gate_width.has_value(), GameKind::Skiing, "gate_width");
    extra(c.ring_radius.has_value(), GameKind::Plane, "ring_radius");
    if (c.gap_height && !(*c.gap_height > 0.0 && *c.gap_height <= 1.0))
        out.push_back({"gap_height", "must be in (0, 1]"});
    if (c.gate_width && !(*c.gate_width > 0.0 && *c.gate_width <= 2.0))
        out.push_back({"gate_width", "must be in (0, 2]"});
    if (c.ring_radius && !(*c.ring_radius > 0.0 && *c.ring_radius <= 1.0))
        out.push_back({"ring_radius", "must be in (0, 1]"});
    return out;
}

Violations validate_level(const Level& level, const PatientProfile& profile) {
    Violations out;
    const auto& p = profile;
    if (!(std::isfinite(level.duration) && level.duration >= 0.0))
        out.push_back({"duration", "must be >= 0"});

    const double rf = rom_fraction_of(level);
    if (level.constraints_snapshot) {
        for (auto& v : validate_constraints(level.kind, *level.constraints_snapshot))
            out.push_back({"constraints_snapshot." + v.field, v.message});
    }
    if (level.difficulty) {
        const auto& d = *level.difficulty;
        if (!(d.hit_window_ms > 0.0)) out.push_back({"difficulty.hit_window_ms", "must be > 0"});
        if (!(d.speed > 0.0 && d.speed <= 4.0)) out.push_back({"difficulty.speed", "must be in (0, 4]"});
        if (!(d.gravity > 0.0)) out.push_back({"difficulty.gravity", "must be > 0"});
        if (!(d.impulse_velocity > 0.0)) out.push_back({"difficulty.impulse_velocity", "must be > 0"});
    }
    if (level.scoring) {
        const auto& s = *level.scoring;
        if (s.note < 0 || s.gate < 0 || s.ring < 0 || s.pipe < 0)
            out.push_back({"scoring", "points must be non-negative"});
    }

    const double min_spacing =
        std::max(kMinHumanSpacing, level.constraints_snapshot ? level.constraints_snapshot->min_spacing : 0.0);

    if (level.kind == GameKind::Rhythm && !level.elements.empty() && !press_reachable(p, rf))
        out.push_back({"elements", "press gesture needs more flexion/extension range than allowed"});

    for (std::size_t i = 0; i < level.elements.size(); ++i) {
        const Element& e = level.elements[i];
        if (element_kind(e) != level.kind) {
            out.push_back({elem_path(i), "element does not belong to a " + std::string(to_string(level.kind)) + " level"});
            continue;
        }
        const double t = element_time(e);
        if (!(std::isfinite(t) && t >= 0.0)) out.push_back({elem_path(i, "time"), "time must be >= 0"});
        else if (t > level.duration + kTolerance) out.push_back({elem_path(i, "time"), "time beyond duration"});

        if (i > 0) {
            const double prev = element_time(level.elements[i - 1]);
            if (!(t > prev)) out.push_back({"order", elem_path(i) + " is not after " + elem_path(i - 1)});
            else if (t - prev < min_spacing - kTolerance)
                out.push_back({"spacing", elem_path(i - 1) + " and " + elem_path(i) + " are closer than " +
                                              std::to_string(min_spacing) + " s"});
        }

        std::visit(Overloaded{
                       [&](const RhythmNote& n) {
                           if (!lane_allowed(n.lane, p.handedness))
                               out.push_back({elem_path(i, "lane"), "lane not playable with profile handedness"});
                       },
                       [&](const FlappyPipe& f) {
                           if (!in_range(f.gap_center, 0.0, 1.0))
                               out.push_back({elem_path(i, "gap_center"), "gap_center out of range"});
                           if (!(f.gap_height > 0.0 && f.gap_height <= 1.0))
                               out.push_back({elem_path(i, "gap_height"), "gap_height out of range"});
                           else if (!in_range(f.gap_center - f.gap_height / 2, 0.0, 1.0) ||
                                    !in_range(f.gap_center + f.gap_height / 2, 0.0, 1.0))
                               out.push_back({elem_path(i), "gap extends outside the screen"});
                           if (in_range(f.gap_center, 0.0, 1.0)) {
                               const double a = height_angle_for(f.gap_center, p.rom_flexion_max, p.rom_extension_max);
                               if (!angle_within(a, p.rom_flexion_max, p.rom_extension_max, rf))
                                   out.push_back({elem_path(i, "gap_center"), "not reachable within allowed range of motion"});
                           }
                       },
                       [&](const SkiGate& g) {
                           if (!in_range(g.center, -1.0, 1.0))
                               out.push_back({elem_path(i, "center"), "center out of range"});
                           if (!(g.width > 0.0 && g.width <= 2.0))
                               out.push_back({elem_path(i, "width"), "width out of range"});
                           else if (!in_range(g.center - g.width / 2, -1.0, 1.0) ||
                                    !in_range(g.center + g.width / 2, -1.0, 1.0))
                               out.push_back({elem_path(i), "gate extends outside the track"});
                           if (in_range(g.center, -1.0, 1.0)) {
                               const double a = lateral_angle_for(g.center, p.rom_deviation_left_max,
                                                                  p.rom_deviation_right_max);
                               if (!angle_within(a, p.rom_deviation_left_max, p.rom_deviation_right_max, rf))
                                   out.push_back({elem_path(i, "center"), "not reachable within allowed range of motion"});
                           }
                       },
                       [&](const PlaneRing& r) {
                           const bool yaw_ok = in_range(r.center_yaw, -1.0, 1.0);
                           const bool pitch_ok = in_range(r.center_pitch, -1.0, 1.0);
                           if (!yaw_ok) out.push_back({elem_path(i, "center_yaw"), "center out of range"});
                           if (!pitch_ok) out.push_back({elem_path(i, "center_pitch"), "center out of range"});
                           if (!(r.radius > 0.0 && r.radius <= 1.0))
                               out.push_back({elem_path(i, "radius"), "radius out of range"});
                           else if (yaw_ok && pitch_ok &&
                                    (!in_range(std::abs(r.center_yaw) + r.radius, 0.0, 1.0) ||
                                     !in_range(std::abs(r.center_pitch) + r.radius, 0.0, 1.0)))
                               out.push_back({elem_path(i), "ring extends outside the view"});
                           if (yaw_ok) {
                               const double a = lateral_angle_for(r.center_yaw, p.rom_deviation_left_max,
                                                                  p.rom_deviation_right_max);
                               if (!angle_within(a, p.rom_deviation_left_max, p.rom_deviation_right_max, rf))
                                   out.push_back({elem_path(i, "center_yaw"), "not reachable within allowed range of motion"});
                           }
                           if (pitch_ok) {
                               const double a = height_angle_for((r.center_pitch + 1.0) / 2.0, p.rom_flexion_max,
                                                                 p.rom_extension_max);
                               if (!angle_within(a, p.rom_flexion_max, p.rom_extension_max, rf))
                                   out.push_back({elem_path(i, "center_pitch"), "not reachable within allowed range of motion"});
                           }
                       },
                   },
                   e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generation

Level generate_level(GameKind kind, const GenConstraints& c, const PatientProfile& profile, std::uint64_t seed) {
    if (auto v = validate_profile(profile); !v.empty())
        throw Error(ErrorCode::InvalidConstraints, "profile invalid: " + describe(v));
    if (auto v = validate_constraints(kind, c); !v.empty())
        throw Error(ErrorCode::InvalidConstraints, describe(v));

    const int n = c.element_count;
    if (c.min_spacing * (n - 1) > c.duration)
        throw Error(ErrorCode::InfeasibleConstraints,
                    std::to_string(n) + " elements spaced " + std::to_string(c.min_spacing) + " s need " +
                        std::to_string(c.min_spacing * (n - 1)) + " s > duration " + std::to_string(c.duration) + " s");

    const double rf = c.rom_fraction;
    Band primary;    // height, lateral or yaw band in avatar fractions
    Band secondary;  // plane pitch
    const double gap_height = c.gap_height.value_or(kDefaultGapHeight);
    const double gate_width = c.gate_width.value_or(kDefaultGateWidth);
    const double ring_radius = c.ring_radius.value_or(kDefaultRingRadius);
    const Handedness lanes = lanes_for(c, profile);

    switch (kind) {
        case GameKind::Rhythm:
            if (!press_reachable(profile, rf))
                throw Error(ErrorCode::InfeasibleConstraints, "press gesture not reachable within rom_fraction");
            if (profile.handedness != Handedness::Both && lanes != profile.handedness)
                throw Error(ErrorCode::InfeasibleConstraints, "lanes not playable with profile handedness");
            break;
        case GameKind::Flappy:
            primary = {std::max(0.5 - rf / 2, gap_height / 2), std::min(0.5 + rf / 2, 1.0 - gap_height / 2)};
            break;
        case GameKind::Skiing:
            primary = {std::max(-rf, -1.0 + gate_width / 2), std::min(rf, 1.0 - gate_width / 2)};
            break;
        case GameKind::Plane:
            primary = {std::max(-rf, -1.0 + ring_radius), std::min(rf, 1.0 - ring_radius)};
            secondary = primary;
            break;
    }
    if (primary.empty() || secondary.empty())
        throw Error(ErrorCode::InfeasibleConstraints, "element extent leaves no reachable position band");

    // Stride layout with bounded jitter keeps every gap >= min_spacing by
    // construction. When even the stride is too tight, pack at min_spacing
    // and shift the block as a whole.
    const double stride = c.duration / n;
    const bool strided = stride >= c.min_spacing;
    const double half_jitter = strided ? (stride - c.min_spacing) / 2.0 : 0.0;

    Xoshiro256 rng(seed);
    const double block_offset =
        strided ? 0.0 : rng.uniform(0.0, c.duration - c.min_spacing * (n - 1));

    Level level;
    level.kind = kind;
    level.duration = c.duration;
    level.gen_seed = seed;
    level.constraints_snapshot = c;
    level.elements.reserve(static_cast<std::size_t>(n));

    for (int i = 0; i < n; ++i) {
        const double jitter = rng.uniform(-half_jitter, half_jitter);
        double t = strided ? (i + 0.5) * stride + jitter : block_offset + i * c.min_spacing;
        t = std::clamp(t, 0.0, c.duration);

        switch (kind) {
            case GameKind::Rhythm: {
                Hand lane = lanes == Handedness::Left ? Hand::Left : Hand::Right;
                if (lanes == Handedness::Both) lane = rng.below(2) == 0 ? Hand::Left : Hand::Right;
                level.elements.emplace_back(RhythmNote{t, lane});
                break;
            }
            case GameKind::Flappy:
                level.elements.emplace_back(FlappyPipe{t, rng.uniform(primary.lo, primary.hi), gap_height});
                break;
            case GameKind::Skiing:
                level.elements.emplace_back(SkiGate{t, rng.uniform(primary.lo, primary.hi), gate_width});
                break;
            case GameKind::Plane: {
                const double yaw = rng.uniform(primary.lo, primary.hi);
                const double pitch = rng.uniform(secondary.lo, secondary.hi);
                level.elements.emplace_back(PlaneRing{t, yaw, pitch, ring_radius});
                break;
            }
        }
    }
    return level;
}

// ---------------------------------------------------------------------------
// Authoring

Level apply_edits(Level level, const std::vector<LevelEdit>& edits) {
    auto check_index = [&](std::size_t idx, std::size_t step) {
        if (idx >= level.elements.size())
            throw Error(ErrorCode::IndexOutOfRange, "edit " + std::to_string(step) + ": index " + std::to_string(idx) +
                                                        " out of range (" + std::to_string(level.elements.size()) +
                                                        " elements)");
    };
    auto check_kind = [&](const Element& e, std::size_t step) {
        if (element_kind(e) != level.kind)
            throw Error(ErrorCode::InvalidArgument, "edit " + std::to_string(step) + ": element is not a " +
                                                        std::string(to_string(level.kind)) + " element");
    };

    for (std::size_t step = 0; step < edits.size(); ++step) {
        std::visit(Overloaded{
                       [&](const AddElement& a) {
                           check_kind(a.element, step);
                           level.elements.push_back(a.element);
                       },
                       [&](const MoveElement& m) {
                           check_index(m.index, step);
                           std::visit([&](auto& el) { el.time = m.time; }, level.elements[m.index]);
                       },
                       [&](const ReplaceElement& r) {
                           check_index(r.index, step);
                           check_kind(r.element, step);
                           level.elements[r.index] = r.element;
                       },
                       [&](const DeleteElement& d) {
                           check_index(d.index, step);
                           level.elements.erase(level.elements.begin() + static_cast<std::ptrdiff_t>(d.index));
                       },
                       [&](const SetDuration& s) { level.duration = s.duration; },
                   },
                   edits[step]);
    }
    // Authored content no longer matches any generator run.
    if (!edits.empty()) {
        level.gen_seed.reset();
        level.constraints_snapshot.reset();
    }
    return level;
}

Level author_level(GameKind kind, const std::vector<LevelEdit>& edits) {
    Level level;
    level.kind = kind;
    return apply_edits(std::move(level), edits);
}

// ---------------------------------------------------------------------------
// Codecs

json element_to_json(const Element& e) {
    return std::visit(Overloaded{
                          [](const RhythmNote& n) { return json{{"time", n.time}, {"lane", to_string(n.lane)}}; },
                          [](const FlappyPipe& f) {
                              return json{{"time", f.time}, {"gap_center", f.gap_center}, {"gap_height", f.gap_height}};
                          },
                          [](const SkiGate& g) {
                              return json{{"time", g.time}, {"center", g.center}, {"width", g.width}};
                          },
                          [](const PlaneRing& r) {
                              return json{{"time", r.time},
                                          {"center_yaw", r.center_yaw},
                                          {"center_pitch", r.center_pitch},
                                          {"radius", r.radius}};
                          },
                      },
                      e);
}

Element element_from_json(const json& doc, GameKind kind, const std::string& path) {
    ObjectReader r(doc, path);
    Element out;
    switch (kind) {
        case GameKind::Rhythm: {
            RhythmNote n;
            n.time = r.number("time");
            const auto lane = r.string("lane");
            auto h = hand_from_string(lane);
            if (!h) detail::parse_fail(r.path_of("lane"), "expected left|right, got '" + lane + "'");
            n.lane = *h;
            out = n;
            break;
        }
        case GameKind::Flappy:
            out = FlappyPipe{r.number("time"), r.number("gap_center"), r.number("gap_height")};
            break;
        case GameKind::Skiing:
            out = SkiGate{r.number("time"), r.number("center"), r.number("width")};
            break;
        case GameKind::Plane:
            out = PlaneRing{r.number("time"), r.number("center_yaw"), r.number("center_pitch"), r.number("radius")};
            break;
    }
    r.finish();
    return out;
}

json constraints_to_json(const GenConstraints& c) {
    json j{{"duration", c.duration},
           {"element_count", c.element_count},
           {"rom_fraction", c.rom_fraction},
           {"min_spacing", c.min_spacing}};
    if (c.lanes) j["lanes"] = to_string(*c.lanes);
    if (c.gap_height) j["gap_height"] = *c.gap_height;
    if (c.gate_width) j["gate_width"] = *c.gate_width;
    if (c.ring_radius) j["ring_radius"] = *c.ring_radius;
    return j;
}

GenConstraints constraints_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    GenConstraints c;
    c.duration = r.number("duration");
    c.element_count = static_cast<int>(r.integer("element_count"));
    c.rom_fraction = r.number("rom_fraction");
    c.min_spacing = r.number("min_spacing");
    if (const json* v = r.optional("lanes")) {
        const auto text = ObjectReader::as_string(*v, r.path_of("lanes"));
        auto h = handedness_from_string(text);
        if (!h) detail::parse_fail(r.path_of("lanes"), "expected left|right|both, got '" + text + "'");
        c.lanes = *h;
    }
    if (const json* v = r.optional("gap_height")) c.gap_height = ObjectReader::as_number(*v, r.path_of("gap_height"));
    if (const json* v = r.optional("gate_width")) c.gate_width = ObjectReader::as_number(*v, r.path_of("gate_width"));
    if (const json* v = r.optional("ring_radius"))
        c.ring_radius = ObjectReader::as_number(*v, r.path_of("ring_radius"));
    r.finish();
    return c;
}

json level_to_json(const Level& level) {
    json elements = json::array();
    for (const auto& e : level.elements) elements.push_back(element_to_json(e));
    json j{{"schema_version", Level::kSchemaVersion},
           {"game_kind", to_string(level.kind)},
           {"duration", level.duration},
           {"elements", std::move(elements)}};
    if (level.gen_seed) j["gen_seed"] = *level.gen_seed;
    if (level.constraints_snapshot) j["constraints_snapshot"] = constraints_to_json(*level.constraints_snapshot);
    if (level.scoring) {
        const auto& s = *level.scoring;
        j["scoring"] = {{"note", s.note}, {"gate", s.gate}, {"ring", s.ring}, {"pipe", s.pipe}};
    }
    if (level.difficulty) {
        const auto& d = *level.difficulty;
        j["difficulty"] = {{"hit_window_ms", d.hit_window_ms},
                           {"speed", d.speed},
                           {"gravity", d.gravity},
                           {"impulse_velocity", d.impulse_velocity}};
    }
    return j;
}

Level level_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    const auto version = r.integer("schema_version");
    if (version != Level::kSchemaVersion)
        detail::parse_fail(r.path_of("schema_version"), "unsupported version " + std::to_string(version));
    Level level;
    const auto kind_text = r.string("game_kind");
    auto kind = game_kind_from_string(kind_text);
    if (!kind) detail::parse_fail(r.path_of("game_kind"), "unknown game kind '" + kind_text + "'");
    level.kind = *kind;
    level.duration = r.number("duration");
    const json& elements = r.required("elements");
    if (!elements.is_array()) detail::parse_fail(r.path_of("elements"), "expected an array");
    for (std::size_t i = 0; i < elements.size(); ++i)
        level.elements.push_back(element_from_json(elements[i], level.kind, r.path_of(elem_path(i))));
    if (r.optional("gen_seed")) level.gen_seed = r.unsigned_integer("gen_seed");
    if (const json* v = r.optional("constraints_snapshot"))
        level.constraints_snapshot = constraints_from_json(*v, r.path_of("constraints_snapshot"));
    if (const json* v = r.optional("scoring")) {
        ObjectReader s(*v, r.path_of("scoring"));
        level.scoring = ScoringRules{static_cast<int>(s.integer("note")), static_cast<int>(s.integer("gate")),
                                     static_cast<int>(s.integer("ring")), static_cast<int>(s.integer("pipe"))};
        s.finish();
    }
    if (const json* v = r.optional("difficulty")) {
        ObjectReader d(*v, r.path_of("difficulty"));
        level.difficulty = LevelDifficulty{d.number("hit_window_ms"), d.number("speed"), d.number("gravity"),
                                           d.number("impulse_velocity")};
        d.finish();
    }
    r.finish();
    return level;
}

Level load_level(std::string_view document) { return level_from_json(detail::parse_document(document), ""); }

std::string save_level(const Level& level) { return detail::canonical(level_to_json(level)); }

Level read_level_file(const std::string& path) { return load_level(read_text_file(path)); }

LevelScript load_level_script(std::string_view document) {
    const json doc = detail::parse_document(document);
    ObjectReader r(doc, "");
    LevelScript script;
    const auto kind_text = r.string("game_kind");
    auto kind = game_kind_from_string(kind_text);
    if (!kind) detail::parse_fail("game_kind", "unknown game kind '" + kind_text + "'");
    script.kind = *kind;
    const json& edits = r.required("edits");
    if (!edits.is_array()) detail::parse_fail("edits", "expected an array");
    for (std::size_t i = 0; i < edits.size(); ++i) {
        const std::string path = "edits[" + std::to_string(i) + "]";
        ObjectReader e(edits[i], path);
        const auto op = e.string("op");
        auto index = [&] {
            const auto v = e.integer("index");
            if (v < 0) detail::parse_fail(e.path_of("index"), "must be >= 0");
            return static_cast<std::size_t>(v);
        };
        if (op == "add") {
            script.edits.emplace_back(AddElement{element_from_json(e.required("element"), script.kind, e.path_of("element"))});
        } else if (op == "move") {
            const auto idx = index();
            script.edits.emplace_back(MoveElement{idx, e.number("time")});
        } else if (op == "replace") {
            const auto idx = index();
            script.edits.emplace_back(
                ReplaceElement{idx, element_from_json(e.required("element"), script.kind, e.path_of("element"))});
        } else if (op == "delete") {
            script.edits.emplace_back(DeleteElement{index()});
        } else if (op == "set_duration") {
            script.edits.emplace_back(SetDuration{e.number("duration")});
        } else {
            detail::parse_fail(e.path_of("op"), "unknown edit op '" + op + "'");
        }
        e.finish();
    }
    r.finish();
    return script;
}

}  // namespace wr
