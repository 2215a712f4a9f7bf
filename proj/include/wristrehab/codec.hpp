#pragma once

// JSON encodings of the domain types. One schema is shared by profile and
// level files, session records, the device bridge, and the service wire.

#include <string>

#include <json.hpp>

#include "wristrehab/gamecore.hpp"
#include "wristrehab/kinematics.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/profiles.hpp"

namespace wr {

using json = nlohmann::json;

json profile_to_json(const PatientProfile& profile);
PatientProfile profile_from_json(const json& doc, const std::string& path = "");

json level_to_json(const Level& level);
Level level_from_json(const json& doc, const std::string& path = "");

json constraints_to_json(const GenConstraints& c);
GenConstraints constraints_from_json(const json& doc, const std::string& path = "");

json element_to_json(const Element& e);
Element element_from_json(const json& doc, GameKind kind, const std::string& path = "");

json frame_to_json(const HandFrame& frame);
HandFrame frame_from_json(const json& doc, const std::string& path = "");

json angles_to_json(const WristAngles& angles);
WristAngles angles_from_json(const json& doc, const std::string& path = "");

json calibration_to_json(const NeutralPose& calib);
NeutralPose calibration_from_json(const json& doc, const std::string& path = "");

json scalars_to_json(const DifficultyScalars& s);
DifficultyScalars scalars_from_json(const json& doc, const std::string& path = "");

json status_to_json(const GameStatus& status);
GameStatus status_from_json(const json& doc, const std::string& path = "");

json event_to_json(const GameEvent& event);
GameEvent event_from_json(const json& doc, const std::string& path = "");

/// Dynamic state only (level and profile are identified by digest elsewhere).
json state_to_json(const GameState& state);

json violations_to_json(const Violations& v);

}  // namespace wr
