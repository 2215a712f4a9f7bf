#include "wristrehab/codec.hpp"

#include "json_util.hpp"
#include "wristrehab/error.hpp"

namespace wr {

using detail::ObjectReader;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

json vec_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) detail::parse_fail(path, "expected [x, y, z]");
    return {ObjectReader::as_number(j[0], path + "[0]"), ObjectReader::as_number(j[1], path + "[1]"),
            ObjectReader::as_number(j[2], path + "[2]")};
}

template <class Enum, class Parse>
Enum enum_field(ObjectReader& r, std::string_view key, Parse parse) {
    const auto text = r.string(key);
    auto v = parse(text);
    if (!v) detail::parse_fail(r.path_of(key), "unknown value '" + text + "'");
    return *v;
}

std::size_t index_field(ObjectReader& r, std::string_view key) {
    const auto v = r.integer(key);
    if (v < 0) detail::parse_fail(r.path_of(key), "must be >= 0");
    return static_cast<std::size_t>(v);
}

json pose_to_json(const HandPose& p) {
    return {{"palm_position", vec_to_json(p.palm_position)},
            {"hand_direction", vec_to_json(p.hand_direction)},
            {"palm_normal", vec_to_json(p.palm_normal)},
            {"confidence", p.confidence}};
}

HandPose pose_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    HandPose p;
    p.palm_position = vec_from_json(r.required("palm_position"), r.path_of("palm_position"));
    p.hand_direction = vec_from_json(r.required("hand_direction"), r.path_of("hand_direction"));
    p.palm_normal = vec_from_json(r.required("palm_normal"), r.path_of("palm_normal"));
    p.confidence = r.number("confidence");
    r.finish();
    return p;
}

}  // namespace

json frame_to_json(const HandFrame& f) {
    json j{{"timestamp", f.timestamp_ms}};
    for (Hand h : kBothHands)
        if (f.hands[h]) j[std::string(to_string(h))] = pose_to_json(*f.hands[h]);
    return j;
}

HandFrame frame_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    HandFrame f;
    f.timestamp_ms = r.number("timestamp");
    for (Hand h : kBothHands) {
        const std::string key(to_string(h));
        if (const json* v = r.optional(key)) f.hands[h] = pose_from_json(*v, r.path_of(key));
    }
    r.finish();
    return f;
}

json angles_to_json(const WristAngles& a) {
    json j = json::object();
    for (Hand h : kBothHands) {
        if (a[h])
            j[std::string(to_string(h))] = {{"flexion_extension", a[h]->flexion_extension},
                                            {"deviation", a[h]->deviation}};
    }
    return j;
}

WristAngles angles_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    WristAngles out;
    for (Hand h : kBothHands) {
        const std::string key(to_string(h));
        if (const json* v = r.optional(key)) {
            ObjectReader a(*v, r.path_of(key));
            out[h] = Angles{a.number("flexion_extension"), a.number("deviation")};
            a.finish();
        }
    }
    r.finish();
    return out;
}

json calibration_to_json(const NeutralPose& c) {
    json j = json::object();
    for (Hand h : kBothHands)
        j[std::string(to_string(h))] = {{"flexion_extension_offset", c[h].flexion_extension},
                                        {"deviation_offset", c[h].deviation}};
    return j;
}

NeutralPose calibration_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    NeutralPose out;
    for (Hand h : kBothHands) {
        const std::string key(to_string(h));
        if (const json* v = r.optional(key)) {
            ObjectReader a(*v, r.path_of(key));
            out[h] = Angles{a.number("flexion_extension_offset"), a.number("deviation_offset")};
            a.finish();
        }
    }
    r.finish();
    return out;
}

json scalars_to_json(const DifficultyScalars& s) {
    return {{"speed", s.speed},
            {"hit_window_ms", s.hit_window_ms},
            {"extent_scale", s.extent_scale},
            {"gravity", s.gravity},
            {"impulse_velocity", s.impulse_velocity}};
}

DifficultyScalars scalars_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    DifficultyScalars s{r.number("speed"), r.number("hit_window_ms"), r.number("extent_scale"), r.number("gravity"),
                        r.number("impulse_velocity")};
    r.finish();
    return s;
}

json status_to_json(const GameStatus& s) {
    json j{{"state", to_string(s.state)}};
    if (s.reason != StopReason::None) j["reason"] = to_string(s.reason);
    if (!s.detail.empty()) j["detail"] = s.detail;
    return j;
}

GameStatus status_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    GameStatus s;
    s.state = enum_field<RunState>(r, "state", [](std::string_view t) -> std::optional<RunState> {
        for (auto v : {RunState::Running, RunState::Stopped, RunState::Finished})
            if (to_string(v) == t) return v;
        return std::nullopt;
    });
    if (r.optional("reason")) s.reason = enum_field<StopReason>(r, "reason", stop_reason_from_string);
    if (const json* v = r.optional("detail")) s.detail = ObjectReader::as_string(*v, r.path_of("detail"));
    r.finish();
    return s;
}

json event_to_json(const GameEvent& e) {
    json j{{"timestamp", e.timestamp_ms}, {"kind", event_name(e)}};
    std::visit(Overloaded{
                   [&](const HitEvent& v) { j["element"] = v.element, j["points"] = v.points; },
                   [&](const MissEvent& v) { j["element"] = v.element; },
                   [&](const CollisionEvent& v) { j["element"] = v.element; },
                   [&](const GatePassedEvent& v) { j["element"] = v.element, j["points"] = v.points; },
                   [&](const RingPassedEvent& v) { j["element"] = v.element, j["points"] = v.points; },
                   [&](const GestureUsedEvent& v) { j["hand"] = to_string(v.hand), j["gesture"] = to_string(v.gesture); },
                   [&](const AdaptedEvent& v) {
                       j["scalars"] = scalars_to_json(v.scalars);
                       j["adaptation_count"] = v.adaptation_count;
                   },
                   [&](const SafetyStopEvent& v) {
                       j["reason"] = to_string(v.reason);
                       if (!v.channel.empty()) j["channel"] = v.channel;
                   },
                   [&](const DistanceWarningEvent& v) { j["status"] = to_string(v.status); },
                   [&](const FinishedEvent& v) { j["final_score"] = v.final_score; },
                   [&](const StoppedEvent& v) { j["reason"] = to_string(v.reason); },
               },
               e.data);
    return j;
}

GameEvent event_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    GameEvent e;
    e.timestamp_ms = r.integer("timestamp");
    const auto kind = r.string("kind");
    auto points = [&] { return static_cast<int>(r.integer("points")); };
    if (kind == "Hit") {
        const auto idx = index_field(r, "element");
        e.data = HitEvent{idx, points()};
    } else if (kind == "Miss") {
        e.data = MissEvent{index_field(r, "element")};
    } else if (kind == "Collision") {
        e.data = CollisionEvent{index_field(r, "element")};
    } else if (kind == "GatePassed") {
        const auto idx = index_field(r, "element");
        e.data = GatePassedEvent{idx, points()};
    } else if (kind == "RingPassed") {
        const auto idx = index_field(r, "element");
        e.data = RingPassedEvent{idx, points()};
    } else if (kind == "GestureUsed") {
        const auto hand = enum_field<Hand>(r, "hand", hand_from_string);
        e.data = GestureUsedEvent{hand, enum_field<GestureKind>(r, "gesture", gesture_kind_from_string)};
    } else if (kind == "Adapted") {
        const auto sc = scalars_from_json(r.required("scalars"), r.path_of("scalars"));
        e.data = AdaptedEvent{sc, static_cast<int>(r.integer("adaptation_count"))};
    } else if (kind == "SafetyStop") {
        SafetyStopEvent v;
        v.reason = enum_field<StopReason>(r, "reason", stop_reason_from_string);
        if (const json* c = r.optional("channel")) v.channel = ObjectReader::as_string(*c, r.path_of("channel"));
        e.data = v;
    } else if (kind == "DistanceWarning") {
        e.data = DistanceWarningEvent{enum_field<DistanceStatus>(r, "status", distance_status_from_string)};
    } else if (kind == "Finished") {
        e.data = FinishedEvent{r.integer("final_score")};
    } else if (kind == "Stopped") {
        e.data = StoppedEvent{enum_field<StopReason>(r, "reason", stop_reason_from_string)};
    } else {
        detail::parse_fail(r.path_of("kind"), "unknown event kind '" + kind + "'");
    }
    r.finish();
    return e;
}

json state_to_json(const GameState& s) {
    std::string resolved(s.resolved.size(), '0');
    for (std::size_t i = 0; i < s.resolved.size(); ++i)
        if (s.resolved[i]) resolved[i] = '1';
    json perf = json::array();
    for (bool miss : s.perf.outcomes()) perf.push_back(miss);
    json rom = json::array();
    for (const auto& since : s.rom_violation_since) rom.push_back(since ? json(*since) : json(nullptr));
    const auto& a = s.avatar;
    return {
        {"kind", to_string(s.kind)},
        {"mode", to_string(s.mode)},
        {"elapsed_ms", s.elapsed_ms},
        {"tick", s.tick},
        {"track_ms", s.track_ms},
        {"avatar",
         {{"lane_press_ms", json::array({a.lane_press_ms[0], a.lane_press_ms[1]})},
          {"y", a.y},
          {"vy", a.vy},
          {"x", a.x},
          {"yaw", a.yaw},
          {"pitch", a.pitch}}},
        {"next_element_index", s.next_element_index},
        {"resolved", resolved},
        {"required_hands", s.required_hands},
        {"score", s.score},
        {"adaptation_count", s.adaptation_count},
        {"scalars", scalars_to_json(s.scalars)},
        {"perf", perf},
        {"dropout_ms", s.dropout_ms},
        {"distance", to_string(s.distance)},
        {"rom_violation_since", rom},
        {"status", status_to_json(s.status)},
    };
}

json violations_to_json(const Violations& v) {
    json out = json::array();
    for (const auto& x : v) out.push_back({{"field", x.field}, {"message", x.message}});
    return out;
}

}  // namespace wr
