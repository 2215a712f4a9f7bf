#include "wristrehab/engine.hpp"

#include <algorithm>
#include <cmath>

#include "wristrehab/error.hpp"

namespace wr {

double entry_timestamp(const SessionEntry& entry) {
    struct {
        double operator()(const FrameEntry& f) const { return f.frame.timestamp_ms; }
        double operator()(const EventEntry& e) const { return static_cast<double>(e.event.timestamp_ms); }
        double operator()(const TickDigestEntry& t) const { return static_cast<double>(t.timestamp_ms); }
    } visitor;
    return std::visit(visitor, entry);
}

SessionEngine::SessionEngine(GameState initial, EngineConfig config)
    : state_(std::move(initial)), config_(std::move(config)) {
    if (config_.tick_ms <= 0 || config_.tick_ms > 100)
        throw Error(ErrorCode::InvalidArgument, "tick_ms must be in (0, 100]");
    if (!(config_.smoothing_alpha > 0.0 && config_.smoothing_alpha <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "smoothing_alpha must be in (0, 1]");
    if (config_.digest_interval < 1) throw Error(ErrorCode::InvalidArgument, "digest_interval must be >= 1");
    validate_calibration(config_.calibration);

    // Only the gestures the game consumes are detected.
    std::optional<GestureKind> kind;
    if (state_.kind == GameKind::Rhythm) kind = GestureKind::Press;
    if (state_.kind == GameKind::Flappy && state_.mode == GameMode::Impulse) kind = GestureKind::Flap;
    if (kind) {
        for (Hand h : kBothHands) detectors_.emplace_back(h, state_.profile->gesture_spec.spec(*kind));
    }
}

void SessionEngine::run_tick(std::vector<SessionEntry>& out, const TickObserver& observer) {
    TickInput input{smoothed_, palms_, std::move(pending_gestures_)};
    pending_gestures_.clear();
    TickResult r = tick(state_, input, config_.tick_ms);
    state_ = std::move(r.state);
    for (const auto& e : r.events) out.emplace_back(EventEntry{e});
    if (state_.tick % config_.digest_interval == 0)
        out.emplace_back(TickDigestEntry{state_.tick, state_.elapsed_ms, state_digest(state_)});
    if (observer) observer(state_, r.events);
}

std::vector<SessionEntry> SessionEngine::push_frame(const HandFrame& frame, const TickObserver& observer) {
    std::vector<SessionEntry> out;
    if (!running()) return out;
    validate_frame(frame);
    if (!std::isfinite(frame.timestamp_ms) || frame.timestamp_ms < 0.0)
        throw Error(ErrorCode::MalformedFrame, "frame timestamp must be finite and >= 0");
    if (last_frame_ms_ && frame.timestamp_ms <= *last_frame_ms_)
        throw Error(ErrorCode::OutOfOrderEntry, "frame at " + std::to_string(frame.timestamp_ms) +
                                                    " ms is not after " + std::to_string(*last_frame_ms_) + " ms");
    const WristAngles raw = wrist_angles(frame, config_.calibration);

    while (running() && static_cast<double>(state_.elapsed_ms + config_.tick_ms) <= frame.timestamp_ms)
        run_tick(out, observer);
    if (!running()) return out;

    last_frame_ms_ = frame.timestamp_ms;
    out.emplace_back(FrameEntry{frame, raw});
    smoothed_ = smooth(smoothed_, raw, config_.smoothing_alpha);
    for (Hand h : kBothHands) palms_[h] = frame.hands[h] ? std::optional(frame.hands[h]->palm_position) : std::nullopt;

    for (auto& d : detectors_) {
        const Hand h = d.hand();
        if (!smoothed_[h]) {
            d.reset();
            continue;
        }
        if (auto g = d.push(frame.timestamp_ms, smoothed_[h]->flexion_extension)) pending_gestures_.push_back(*g);
    }
    return out;
}

std::vector<SessionEntry> SessionEngine::advance_to(double t_ms, const TickObserver& observer) {
    std::vector<SessionEntry> out;
    while (running() && static_cast<double>(state_.elapsed_ms + config_.tick_ms) <= t_ms) run_tick(out, observer);
    return out;
}

std::vector<SessionEntry> SessionEngine::stop(StopReason reason) {
    std::vector<SessionEntry> out;
    if (auto e = stop_game(state_, reason)) {
        // Frames need not sit on tick boundaries; keep the log ordered.
        if (last_frame_ms_)
            e->timestamp_ms = std::max(e->timestamp_ms, static_cast<std::int64_t>(std::ceil(*last_frame_ms_)));
        out.emplace_back(EventEntry{*e});
    }
    return out;
}

}  // namespace wr
