#include "wristrehab/gamecore.hpp"

#include <algorithm>
#include <cmath>

#include "wristrehab/codec.hpp"
#include "wristrehab/digest.hpp"
#include "wristrehab/error.hpp"

namespace wr {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::uint8_t hand_bit(Hand h) { return h == Hand::Left ? 1 : 2; }

std::uint8_t handedness_mask(Handedness h) {
    switch (h) {
        case Handedness::Left: return 1;
        case Handedness::Right: return 2;
        case Handedness::Both: return 3;
    }
    return 2;
}

// Rhythm and two-hand plane need every required hand; the single-hand games
// need any one of them.
bool needs_all_hands(const GameState& s) { return s.kind == GameKind::Rhythm || s.mode == GameMode::TwoHands; }

bool hands_missing(const GameState& s, const WristAngles& angles) {
    bool any_present = false;
    bool any_absent = false;
    for (Hand h : kBothHands) {
        if (!(s.required_hands & hand_bit(h))) continue;
        (angles[h] ? any_present : any_absent) = true;
    }
    return needs_all_hands(s) ? any_absent : !any_present;
}

double element_ms(const Element& e) { return element_time(e) * 1000.0; }

ScoringRules scoring_of(const GameState& s) { return s.level->scoring.value_or(ScoringRules{}); }

int points_for(const ScoringRules& rules, GameKind kind) {
    switch (kind) {
        case GameKind::Rhythm: return rules.note;
        case GameKind::Flappy: return rules.pipe;
        case GameKind::Skiing: return rules.gate;
        case GameKind::Plane: return rules.ring;
    }
    return 0;
}

GameEventData outcome_event(Outcome o, std::size_t index, int points) {
    switch (o) {
        case Outcome::Hit: return HitEvent{index, points};
        case Outcome::Miss: return MissEvent{index};
        case Outcome::Collision: return CollisionEvent{index};
        case Outcome::GatePassed: return GatePassedEvent{index, points};
        case Outcome::RingPassed: return RingPassedEvent{index, points};
    }
    return MissEvent{index};
}

struct Tick {
    GameState& s;
    std::vector<GameEvent>& events;

    void emit(GameEventData data) { events.push_back(GameEvent{s.elapsed_ms, std::move(data)}); }

    bool running() const { return s.status.state == RunState::Running; }

    // Records one element outcome and lets the adaptation policy react.
    void resolve(std::size_t index, Outcome outcome) {
        s.resolved[index] = true;
        const int points = is_success(outcome) ? points_for(scoring_of(s), s.kind) : 0;
        s.score += points;
        emit(outcome_event(outcome, index, points));
        s.perf.push(!is_success(outcome));
        if (auto e = adapt(s, s.profile->adaptation_policy)) events.push_back(*e);
    }

    void advance_cursor() {
        while (s.next_element_index < s.resolved.size() && s.resolved[s.next_element_index]) ++s.next_element_index;
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Mappings

double map_continuous_height(double fe, double flexion_max, double extension_max) {
    const double h = fe >= 0.0 ? 0.5 + 0.5 * fe / extension_max : 0.5 + 0.5 * fe / flexion_max;
    return std::clamp(h, 0.0, 1.0);
}

double map_lateral(double angle, double rom_left, double rom_right) {
    const double x = angle >= 0.0 ? angle / rom_right : angle / rom_left;
    return std::clamp(x, -1.0, 1.0);
}

double height_angle_for(double height, double flexion_max, double extension_max) {
    const double d = 2.0 * (height - 0.5);
    return d >= 0.0 ? d * extension_max : d * flexion_max;
}

double lateral_angle_for(double lateral, double rom_left, double rom_right) {
    return lateral >= 0.0 ? lateral * rom_right : lateral * rom_left;
}

// ---------------------------------------------------------------------------
// Enumerations

std::string_view to_string(GameMode mode) {
    switch (mode) {
        case GameMode::Standard: return "Standard";
        case GameMode::Impulse: return "Impulse";
        case GameMode::Continuous: return "Continuous";
        case GameMode::Deviation: return "Deviation";
        case GameMode::RotatedFlexion: return "RotatedFlexion";
        case GameMode::OneHand: return "OneHand";
        case GameMode::TwoHands: return "TwoHands";
    }
    return "Standard";
}

std::optional<GameMode> game_mode_from_string(std::string_view text) {
    for (auto m : {GameMode::Standard, GameMode::Impulse, GameMode::Continuous, GameMode::Deviation,
                   GameMode::RotatedFlexion, GameMode::OneHand, GameMode::TwoHands}) {
        if (to_string(m) == text) return m;
    }
    return std::nullopt;
}

bool mode_allowed(GameKind kind, GameMode mode) {
    switch (kind) {
        case GameKind::Rhythm: return mode == GameMode::Standard;
        case GameKind::Flappy: return mode == GameMode::Impulse || mode == GameMode::Continuous;
        case GameKind::Skiing: return mode == GameMode::Deviation || mode == GameMode::RotatedFlexion;
        case GameKind::Plane: return mode == GameMode::OneHand || mode == GameMode::TwoHands;
    }
    return false;
}

GameMode default_mode(GameKind kind) {
    switch (kind) {
        case GameKind::Rhythm: return GameMode::Standard;
        case GameKind::Flappy: return GameMode::Impulse;
        case GameKind::Skiing: return GameMode::Deviation;
        case GameKind::Plane: return GameMode::OneHand;
    }
    return GameMode::Standard;
}

std::string_view to_string(RunState s) {
    switch (s) {
        case RunState::Running: return "Running";
        case RunState::Stopped: return "Stopped";
        case RunState::Finished: return "Finished";
    }
    return "Running";
}

std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::None: return "None";
        case StopReason::SafetyStop: return "SafetyStop";
        case StopReason::AdaptExhausted: return "AdaptExhausted";
        case StopReason::UserStop: return "UserStop";
        case StopReason::Disconnected: return "Disconnected";
        case StopReason::SessionCap: return "SessionCap";
        case StopReason::SourceEnded: return "SourceEnded";
    }
    return "None";
}

std::optional<StopReason> stop_reason_from_string(std::string_view text) {
    for (auto r : {StopReason::None, StopReason::SafetyStop, StopReason::AdaptExhausted, StopReason::UserStop,
                   StopReason::Disconnected, StopReason::SessionCap, StopReason::SourceEnded}) {
        if (to_string(r) == text) return r;
    }
    return std::nullopt;
}

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::Hit: return "Hit";
        case Outcome::Miss: return "Miss";
        case Outcome::Collision: return "Collision";
        case Outcome::GatePassed: return "GatePassed";
        case Outcome::RingPassed: return "RingPassed";
    }
    return "Miss";
}

std::string_view to_string(RomChannel c) {
    switch (c) {
        case RomChannel::Extension: return "extension";
        case RomChannel::Flexion: return "flexion";
        case RomChannel::DeviationLeft: return "deviation_left";
        case RomChannel::DeviationRight: return "deviation_right";
    }
    return "extension";
}

std::string_view event_name(const GameEvent& e) {
    return std::visit(Overloaded{
                          [](const HitEvent&) { return std::string_view("Hit"); },
                          [](const MissEvent&) { return std::string_view("Miss"); },
                          [](const CollisionEvent&) { return std::string_view("Collision"); },
                          [](const GatePassedEvent&) { return std::string_view("GatePassed"); },
                          [](const RingPassedEvent&) { return std::string_view("RingPassed"); },
                          [](const GestureUsedEvent&) { return std::string_view("GestureUsed"); },
                          [](const AdaptedEvent&) { return std::string_view("Adapted"); },
                          [](const SafetyStopEvent&) { return std::string_view("SafetyStop"); },
                          [](const DistanceWarningEvent&) { return std::string_view("DistanceWarning"); },
                          [](const FinishedEvent&) { return std::string_view("Finished"); },
                          [](const StoppedEvent&) { return std::string_view("Stopped"); },
                      },
                      e.data);
}

std::optional<Outcome> event_outcome(const GameEvent& e) {
    return std::visit(Overloaded{
                          [](const HitEvent&) -> std::optional<Outcome> { return Outcome::Hit; },
                          [](const MissEvent&) -> std::optional<Outcome> { return Outcome::Miss; },
                          [](const CollisionEvent&) -> std::optional<Outcome> { return Outcome::Collision; },
                          [](const GatePassedEvent&) -> std::optional<Outcome> { return Outcome::GatePassed; },
                          [](const RingPassedEvent&) -> std::optional<Outcome> { return Outcome::RingPassed; },
                          [](const auto&) -> std::optional<Outcome> { return std::nullopt; },
                      },
                      e.data);
}

void PerfWindow::push(bool miss) {
    outcomes_.push_back(miss);
    if (static_cast<int>(outcomes_.size()) > capacity_) outcomes_.erase(outcomes_.begin());
}

int PerfWindow::misses() const { return static_cast<int>(std::count(outcomes_.begin(), outcomes_.end(), true)); }

// ---------------------------------------------------------------------------
// Construction

GameState new_game(GameKind kind, GameMode mode, std::shared_ptr<const Level> level,
                   std::shared_ptr<const PatientProfile> profile) {
    if (!level || !profile) throw Error(ErrorCode::InvalidArgument, "level and profile are required");
    if (!mode_allowed(kind, mode))
        throw Error(ErrorCode::IllegalMode,
                    std::string(to_string(mode)) + " is not a mode of " + std::string(to_string(kind)));
    if (auto v = validate_profile(*profile); !v.empty())
        throw Error(ErrorCode::ValidationFailed, "profile: " + describe(v));
    if (level->kind != kind)
        throw Error(ErrorCode::InvalidLevel, "level is for " + std::string(to_string(level->kind)) + ", not " +
                                                 std::string(to_string(kind)));
    if (auto v = validate_level(*level, *profile); !v.empty())
        throw Error(ErrorCode::InvalidLevel, describe(v));

    GameState s;
    s.kind = kind;
    s.mode = mode;
    s.level = level;
    s.profile = profile;
    s.resolved.assign(level->elements.size(), false);
    s.perf = PerfWindow(profile->adaptation_policy.miss_window);

    const LevelDifficulty d = level->difficulty.value_or(LevelDifficulty{});
    s.scalars = DifficultyScalars{d.speed, d.hit_window_ms, 1.0, d.gravity, d.impulse_velocity};

    if (mode == GameMode::TwoHands) {
        s.required_hands = 3;
    } else if (kind == GameKind::Rhythm) {
        for (const auto& e : level->elements) s.required_hands |= hand_bit(std::get<RhythmNote>(e).lane);
        if (s.required_hands == 0) s.required_hands = handedness_mask(profile->handedness);
    } else {
        s.required_hands = handedness_mask(profile->handedness);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Building blocks

FlappyBody flappy_impulse(FlappyBody body, bool flap, std::int64_t dt_ms, double gravity, double impulse_velocity) {
    const double dt = static_cast<double>(dt_ms) / 1000.0;
    double v0 = body.vy;
    double v1 = body.vy - gravity * dt;
    if (flap) v0 = v1 = impulse_velocity;
    body.vy = v1;
    body.y = std::clamp(body.y + 0.5 * (v0 + v1) * dt, 0.0, 1.0);
    return body;
}

Hand primary_hand(const PatientProfile& profile, const WristAngles& angles) {
    switch (profile.handedness) {
        case Handedness::Left: return Hand::Left;
        case Handedness::Right: return Hand::Right;
        case Handedness::Both: return angles.right || !angles.left ? Hand::Right : Hand::Left;
    }
    return Hand::Right;
}

std::optional<PlaneAttitude> plane_attitude(const WristAngles& angles, const PerHand<Vec3>& palms, GameMode mode,
                                            const PatientProfile& p) {
    Angles a;
    PlaneAttitude out;
    if (mode == GameMode::TwoHands) {
        if (!angles.left || !angles.right) return std::nullopt;
        a.flexion_extension = 0.5 * (angles.left->flexion_extension + angles.right->flexion_extension);
        a.deviation = 0.5 * (angles.left->deviation + angles.right->deviation);
        if (palms.left && palms.right)
            out.distance_status = hand_distance_status(*palms.left, *palms.right, p.hand_distance_band);
    } else {
        const auto& one = angles[primary_hand(p, angles)];
        if (!one) return std::nullopt;
        a = *one;
    }
    out.pitch = 2.0 * map_continuous_height(a.flexion_extension, p.rom_flexion_max, p.rom_extension_max) - 1.0;
    out.yaw = map_lateral(a.deviation, p.rom_deviation_left_max, p.rom_deviation_right_max);
    return out;
}

Outcome resolve_element(const Element& element, const Avatar& avatar, const DifficultyScalars& sc,
                        std::optional<double> press_track_ms) {
    return std::visit(Overloaded{
                          [&](const RhythmNote& n) {
                              const bool hit = press_track_ms &&
                                               std::abs(*press_track_ms - n.time * 1000.0) <= sc.hit_window_ms;
                              return hit ? Outcome::Hit : Outcome::Miss;
                          },
                          [&](const FlappyPipe& f) {
                              const double half = 0.5 * f.gap_height * sc.extent_scale;
                              return std::abs(avatar.y - f.gap_center) <= half ? Outcome::Hit : Outcome::Collision;
                          },
                          [&](const SkiGate& g) {
                              const double half = 0.5 * g.width * sc.extent_scale;
                              return std::abs(avatar.x - g.center) <= half ? Outcome::GatePassed : Outcome::Miss;
                          },
                          [&](const PlaneRing& r) {
                              const double d = std::hypot(avatar.yaw - r.center_yaw, avatar.pitch - r.center_pitch);
                              return d <= r.radius * sc.extent_scale ? Outcome::RingPassed : Outcome::Miss;
                          },
                      },
                      element);
}

std::optional<GameEvent> adapt(GameState& s, const AdaptPolicy& policy) {
    if (s.status.state != RunState::Running || !s.perf.full()) return std::nullopt;
    if (s.perf.misses() < policy.miss_threshold * s.perf.capacity() - 1e-9) return std::nullopt;

    s.perf.clear();
    if (s.adaptation_count >= policy.max_adaptations) {
        if (!policy.stop_after_exhausted) return std::nullopt;
        s.status = GameStatus{RunState::Stopped, StopReason::AdaptExhausted, ""};
        return GameEvent{s.elapsed_ms, SafetyStopEvent{StopReason::AdaptExhausted, ""}};
    }
    const double e = policy.ease_factor;
    auto& sc = s.scalars;
    sc.speed *= e;
    sc.gravity *= e;
    sc.impulse_velocity *= e;
    sc.hit_window_ms /= e;
    sc.extent_scale /= e;
    ++s.adaptation_count;
    return GameEvent{s.elapsed_ms, AdaptedEvent{sc, s.adaptation_count}};
}

std::optional<GameEvent> safety_check(GameState& s, const WristAngles& angles, const PatientProfile& p,
                                      std::int64_t dt_ms) {
    if (s.status.state != RunState::Running) return std::nullopt;
    std::optional<GameEvent> stop;
    for (Hand h : kBothHands) {
        const auto& a = angles[h];
        const std::size_t base = h == Hand::Left ? 0 : 4;
        const std::array<bool, 4> over{
            a && a->flexion_extension > p.rom_extension_max,
            a && -a->flexion_extension > p.rom_flexion_max,
            a && -a->deviation > p.rom_deviation_left_max,
            a && a->deviation > p.rom_deviation_right_max,
        };
        for (std::size_t c = 0; c < 4; ++c) {
            auto& since = s.rom_violation_since[base + c];
            if (!over[c]) {
                since.reset();
                continue;
            }
            if (!since) since = s.elapsed_ms - dt_ms;
            if (!stop && static_cast<double>(s.elapsed_ms - *since) > p.safety_grace) {
                const std::string channel =
                    std::string(to_string(h)) + "." + std::string(to_string(static_cast<RomChannel>(c)));
                stop = GameEvent{s.elapsed_ms, SafetyStopEvent{StopReason::SafetyStop, channel}};
            }
        }
    }
    if (stop) {
        s.status = GameStatus{RunState::Stopped, StopReason::SafetyStop,
                              std::get<SafetyStopEvent>(stop->data).channel};
    }
    return stop;
}

std::optional<GameEvent> stop_game(GameState& s, StopReason reason) {
    if (s.status.state != RunState::Running) return std::nullopt;
    s.status = GameStatus{RunState::Stopped, reason, ""};
    return GameEvent{s.elapsed_ms, StoppedEvent{reason}};
}

// ---------------------------------------------------------------------------
// Tick

TickResult tick(const GameState& state, const TickInput& in, std::int64_t dt_ms) {
    TickResult result{state, {}};
    if (state.status.state != RunState::Running) return result;
    if (dt_ms <= 0 || dt_ms > 100)
        throw Error(ErrorCode::InvalidArgument, "tick dt must be in (0, 100] ms, got " + std::to_string(dt_ms));

    GameState& s = result.state;
    Tick t{s, result.events};
    const PatientProfile& p = *s.profile;
    const Level& level = *s.level;

    s.elapsed_ms += dt_ms;
    ++s.tick;

    if (auto e = safety_check(s, in.angles, p, dt_ms)) {
        t.events.push_back(*e);
        return result;
    }

    const bool missing = hands_missing(s, in.angles);
    s.dropout_ms = missing ? s.dropout_ms + dt_ms : 0;
    const bool paused = s.dropout_ms >= kDropoutPauseMs;
    if (!paused) s.track_ms += static_cast<double>(dt_ms) * s.scalars.speed;

    const Hand primary = primary_hand(p, in.angles);

    // Avatar update. A missing hand freezes the avatar where it is.
    switch (s.kind) {
        case GameKind::Rhythm:
            for (const auto& g : in.gestures) {
                if (g.kind != GestureKind::Press || !(s.required_hands & hand_bit(g.hand))) continue;
                t.emit(GestureUsedEvent{g.hand, g.kind});
                const std::size_t lane = g.hand == Hand::Left ? 0 : 1;
                s.avatar.lane_press_ms[lane] = s.track_ms;
                for (std::size_t i = s.next_element_index; i < level.elements.size(); ++i) {
                    const auto& note = std::get<RhythmNote>(level.elements[i]);
                    if (note.time * 1000.0 - s.scalars.hit_window_ms > s.track_ms) break;
                    if (s.resolved[i] || note.lane != g.hand) continue;
                    if (resolve_element(note, s.avatar, s.scalars, s.track_ms) == Outcome::Hit) {
                        t.resolve(i, Outcome::Hit);
                        break;
                    }
                }
                if (!t.running()) return result;
            }
            break;
        case GameKind::Flappy:
            if (missing) break;
            if (s.mode == GameMode::Impulse) {
                bool flap = false;
                for (const auto& g : in.gestures) {
                    if (g.kind != GestureKind::Flap || g.hand != primary) continue;
                    t.emit(GestureUsedEvent{g.hand, g.kind});
                    flap = true;
                }
                const FlappyBody b = flappy_impulse({s.avatar.y, s.avatar.vy}, flap, dt_ms, s.scalars.gravity,
                                                    s.scalars.impulse_velocity);
                s.avatar.y = b.y;
                s.avatar.vy = b.vy;
            } else if (const auto& a = in.angles[primary]) {
                s.avatar.y = map_continuous_height(a->flexion_extension, p.rom_flexion_max, p.rom_extension_max);
                s.avatar.vy = 0.0;
            }
            break;
        case GameKind::Skiing:
            if (missing) break;
            if (const auto& a = in.angles[primary]) {
                if (s.mode == GameMode::Deviation) {
                    s.avatar.x = map_lateral(a->deviation, p.rom_deviation_left_max, p.rom_deviation_right_max);
                } else if (p.ski_rotated_sign > 0) {
                    s.avatar.x = map_lateral(a->flexion_extension, p.rom_flexion_max, p.rom_extension_max);
                } else {
                    s.avatar.x = map_lateral(-a->flexion_extension, p.rom_extension_max, p.rom_flexion_max);
                }
            }
            break;
        case GameKind::Plane:
            if (auto att = plane_attitude(in.angles, in.palms, s.mode, p)) {
                s.avatar.pitch = att->pitch;
                s.avatar.yaw = att->yaw;
                if (s.mode == GameMode::TwoHands && att->distance_status != s.distance) {
                    s.distance = att->distance_status;
                    t.emit(DistanceWarningEvent{s.distance});
                }
            }
            break;
    }

    // Resolve elements that came due on the level clock.
    for (std::size_t i = s.next_element_index; i < level.elements.size() && t.running(); ++i) {
        if (s.resolved[i]) continue;
        const double due = element_ms(level.elements[i]);
        if (s.kind == GameKind::Rhythm) {
            if (due - s.scalars.hit_window_ms > s.track_ms) break;
            if (s.track_ms > due + s.scalars.hit_window_ms) t.resolve(i, Outcome::Miss);
        } else {
            if (due > s.track_ms) break;
            t.resolve(i, resolve_element(level.elements[i], s.avatar, s.scalars));
        }
    }
    t.advance_cursor();
    if (!t.running()) return result;

    const bool all_resolved = s.next_element_index >= s.resolved.size();
    const bool level_over = all_resolved && s.track_ms >= level.duration * 1000.0;
    const bool out_of_time = static_cast<double>(s.elapsed_ms) >= p.session_length * 1000.0;
    if (level_over || out_of_time) {
        s.status = GameStatus{RunState::Finished, StopReason::None, ""};
        t.emit(FinishedEvent{s.score});
    }
    return result;
}

std::string state_digest(const GameState& state) { return sha256_hex(state_to_json(state).dump()); }

}  // namespace wr
