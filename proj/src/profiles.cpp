#include "wristrehab/profiles.hpp"

#include <cmath>
#include <sstream>

#include "json_util.hpp"
#include "wristrehab/codec.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/fileio.hpp"

namespace wr {

using detail::json;
using detail::ObjectReader;

std::string_view to_string(Handedness h) {
    switch (h) {
        case Handedness::Left: return "left";
        case Handedness::Right: return "right";
        case Handedness::Both: return "both";
    }
    return "right";
}

std::optional<Handedness> handedness_from_string(std::string_view text) {
    if (text == "left") return Handedness::Left;
    if (text == "right") return Handedness::Right;
    if (text == "both") return Handedness::Both;
    return std::nullopt;
}

namespace {

void check_rom(Violations& out, const char* field, double value) {
    if (!(value > 0.0 && value <= kMaxAngle))
        out.push_back({field, "must be in (0, 90] degrees"});
}

}  // namespace

Violations validate_profile(const PatientProfile& p) {
    Violations out;
    if (p.patient_id.empty()) out.push_back({"patient_id", "must not be empty"});
    check_rom(out, "rom_extension_max", p.rom_extension_max);
    check_rom(out, "rom_flexion_max", p.rom_flexion_max);
    check_rom(out, "rom_deviation_left_max", p.rom_deviation_left_max);
    check_rom(out, "rom_deviation_right_max", p.rom_deviation_right_max);
    if (!(p.session_length >= 30.0 && p.session_length <= 1800.0))
        out.push_back({"session_length", "must be in [30, 1800] seconds"});

    const auto& g = p.gesture_spec;
    if (!(g.min_sweep > 0.0)) out.push_back({"gesture_spec.min_sweep", "must be > 0"});
    if (!(g.max_duration > 0.0)) out.push_back({"gesture_spec.max_duration", "must be > 0"});
    if (!(g.refractory >= 0.0)) out.push_back({"gesture_spec.refractory", "must be >= 0"});
    if (!std::isfinite(g.trigger_angle))
        out.push_back({"gesture_spec.trigger_angle", "must be finite"});

    const auto& band = p.hand_distance_band;
    if (!(band.min_cm >= 0.0 && band.min_cm < band.max_cm))
        out.push_back({"hand_distance_band", "requires 0 <= min < max"});
    if (!(p.safety_grace >= 0.0)) out.push_back({"safety_grace", "must be >= 0 ms"});

    const auto& a = p.adaptation_policy;
    if (a.miss_window < 1) out.push_back({"adaptation_policy.miss_window", "must be >= 1"});
    if (!(a.miss_threshold > 0.0 && a.miss_threshold <= 1.0))
        out.push_back({"adaptation_policy.miss_threshold", "must be in (0, 1]"});
    if (!(a.ease_factor > 0.0 && a.ease_factor < 1.0))
        out.push_back({"adaptation_policy.ease_factor", "must be in (0, 1)"});
    if (a.max_adaptations < 0) out.push_back({"adaptation_policy.max_adaptations", "must be >= 0"});

    if (p.ski_rotated_sign != 1 && p.ski_rotated_sign != -1)
        out.push_back({"ski_rotated_sign", "must be +1 or -1"});
    return out;
}

json profile_to_json(const PatientProfile& p) {
    const auto& g = p.gesture_spec;
    const auto& a = p.adaptation_policy;
    return json{
        {"schema_version", PatientProfile::kSchemaVersion},
        {"patient_id", p.patient_id},
        {"handedness", to_string(p.handedness)},
        {"rom_extension_max", p.rom_extension_max},
        {"rom_flexion_max", p.rom_flexion_max},
        {"rom_deviation_left_max", p.rom_deviation_left_max},
        {"rom_deviation_right_max", p.rom_deviation_right_max},
        {"session_length", p.session_length},
        {"gesture_spec",
         {{"min_sweep", g.min_sweep},
          {"max_duration", g.max_duration},
          {"trigger_angle", g.trigger_angle},
          {"refractory", g.refractory}}},
        {"hand_distance_band", json::array({p.hand_distance_band.min_cm, p.hand_distance_band.max_cm})},
        {"safety_grace", p.safety_grace},
        {"adaptation_policy",
         {{"miss_window", a.miss_window},
          {"miss_threshold", a.miss_threshold},
          {"ease_factor", a.ease_factor},
          {"max_adaptations", a.max_adaptations},
          {"stop_after_exhausted", a.stop_after_exhausted}}},
        {"ski_rotated_sign", p.ski_rotated_sign},
    };
}

PatientProfile profile_from_json(const json& doc, const std::string& path) {
    ObjectReader r(doc, path);
    const auto version = r.integer("schema_version");
    if (version != PatientProfile::kSchemaVersion)
        detail::parse_fail(r.path_of("schema_version"), "unsupported version " + std::to_string(version));

    PatientProfile p;
    p.patient_id = r.string("patient_id");
    const auto handed = r.string("handedness");
    auto h = handedness_from_string(handed);
    if (!h) detail::parse_fail(r.path_of("handedness"), "expected left|right|both, got '" + handed + "'");
    p.handedness = *h;
    p.rom_extension_max = r.number("rom_extension_max");
    p.rom_flexion_max = r.number("rom_flexion_max");
    p.rom_deviation_left_max = r.number("rom_deviation_left_max");
    p.rom_deviation_right_max = r.number("rom_deviation_right_max");
    p.session_length = r.number("session_length");

    {
        ObjectReader g(r.required("gesture_spec"), r.path_of("gesture_spec"));
        p.gesture_spec.min_sweep = g.number("min_sweep");
        p.gesture_spec.max_duration = g.number("max_duration");
        p.gesture_spec.trigger_angle = g.number("trigger_angle");
        p.gesture_spec.refractory = g.number("refractory");
        g.finish();
    }
    {
        const json& band = r.required("hand_distance_band");
        const auto band_path = r.path_of("hand_distance_band");
        if (!band.is_array() || band.size() != 2) detail::parse_fail(band_path, "expected [min_cm, max_cm]");
        p.hand_distance_band.min_cm = ObjectReader::as_number(band[0], band_path + "[0]");
        p.hand_distance_band.max_cm = ObjectReader::as_number(band[1], band_path + "[1]");
    }
    p.safety_grace = r.number("safety_grace");
    {
        ObjectReader a(r.required("adaptation_policy"), r.path_of("adaptation_policy"));
        p.adaptation_policy.miss_window = static_cast<int>(a.integer("miss_window"));
        p.adaptation_policy.miss_threshold = a.number("miss_threshold");
        p.adaptation_policy.ease_factor = a.number("ease_factor");
        p.adaptation_policy.max_adaptations = static_cast<int>(a.integer("max_adaptations"));
        p.adaptation_policy.stop_after_exhausted = a.boolean("stop_after_exhausted");
        a.finish();
    }
    p.ski_rotated_sign = static_cast<int>(r.integer("ski_rotated_sign"));
    r.finish();
    return p;
}

PatientProfile load_profile(std::string_view document) {
    return profile_from_json(detail::parse_document(document), "");
}

std::string save_profile(const PatientProfile& profile) {
    return detail::canonical(profile_to_json(profile));
}

PatientProfile read_profile_file(const std::string& path) {
    return load_profile(read_text_file(path));
}

std::string describe(const Violations& violations) {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) os << "; ";
        os << violations[i].field << ": " << violations[i].message;
    }
    return os.str();
}

}  // namespace wr
