#include "wristrehab/input_sources.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json_util.hpp"
#include "wristrehab/codec.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/fileio.hpp"
#include "wristrehab/rng.hpp"
#include "wristrehab/session_store.hpp"

namespace wr {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double ease(double u) { return 0.5 * (1.0 - std::cos(std::numbers::pi * std::clamp(u, 0.0, 1.0))); }

double clamp_angle(double a) { return std::clamp(a, -kMaxAngle, kMaxAngle); }

[[noreturn]] void bad_spec(const std::string& what) { throw Error(ErrorCode::InvalidArgument, "source spec: " + what); }

// Splits on `sep` outside parentheses.
std::vector<std::string> split_top(std::string_view text, char sep) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char ch : text) {
        if (ch == '(') ++depth;
        if (ch == ')') --depth;
        if (ch == sep && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    return out;
}

double to_double(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        bad_spec("'" + key + "' expects a number, got '" + s + "'");
    }
}

std::uint64_t to_u64(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        bad_spec("'" + key + "' expects a non-negative integer, got '" + s + "'");
    }
}

Waveform parse_waveform(const std::string& text, const std::string& key) {
    const auto open = text.find('(');
    if (open == std::string::npos || text.back() != ')') {
        return Waveform::constant(to_double(text, key));
    }
    const std::string name = text.substr(0, open);
    std::vector<double> args;
    for (const auto& a : split_top(std::string_view(text).substr(open + 1, text.size() - open - 2), ','))
        args.push_back(to_double(a, key));
    if ((name == "const" || name == "constant") && args.size() == 1) return Waveform::constant(args[0]);
    if (name == "sine" && (args.size() == 2 || args.size() == 3))
        return Waveform::sine(args[0], args[1], args.size() == 3 ? args[2] : 0.0);
    if (name == "sweep" && args.size() == 3) return Waveform::sweep(args[0], args[1], args[2]);
    bad_spec("'" + key + "': expected const(v), sine(A,f[,phase]) or sweep(from,to,dur), got '" + text + "'");
}

std::vector<Interval> parse_intervals(const std::string& text, const std::string& key) {
    std::vector<Interval> out;
    for (const auto& part : split_top(text, ';')) {
        const auto dash = part.find('-', 1);
        if (dash == std::string::npos) bad_spec("'" + key + "' expects start-end pairs, got '" + part + "'");
        out.push_back({to_double(part.substr(0, dash), key), to_double(part.substr(dash + 1), key)});
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_params(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    if (text.empty()) return out;
    for (const auto& item : split_top(text, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) bad_spec("expected key=value, got '" + item + "'");
        out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    return out;
}

SyntheticSpec parse_synthetic(std::string_view params) {
    SyntheticSpec s;
    for (const auto& [key, value] : parse_params(params)) {
        if (key == "fe") s.left.flexion_extension = s.right.flexion_extension = parse_waveform(value, key);
        else if (key == "dev") s.left.deviation = s.right.deviation = parse_waveform(value, key);
        else if (key == "fe_left") s.left.flexion_extension = parse_waveform(value, key);
        else if (key == "fe_right") s.right.flexion_extension = parse_waveform(value, key);
        else if (key == "dev_left") s.left.deviation = parse_waveform(value, key);
        else if (key == "dev_right") s.right.deviation = parse_waveform(value, key);
        else if (key == "hands") {
            auto h = handedness_from_string(value);
            if (!h) bad_spec("'hands' expects left|right|both");
            s.left.enabled = *h != Handedness::Right;
            s.right.enabled = *h != Handedness::Left;
        } else if (key == "noise") s.noise_amplitude = to_double(value, key);
        else if (key == "seed") s.seed = to_u64(value, key);
        else if (key == "rate") s.rate_hz = to_double(value, key);
        else if (key == "duration") s.duration_s = to_double(value, key);
        else if (key == "drop_left") s.left.dropouts = parse_intervals(value, key);
        else if (key == "drop_right") s.right.dropouts = parse_intervals(value, key);
        else if (key == "spread") {
            const double half = to_double(value, key) / 2.0;
            s.left.palm_position.x = -half;
            s.right.palm_position.x = half;
        } else bad_spec("unknown synthetic key '" + key + "'");
    }
    validate_synthetic(s);
    return s;
}

AutopilotSpec parse_autopilot(std::string_view params) {
    AutopilotSpec a;
    for (const auto& [key, value] : parse_params(params)) {
        if (key == "seed") a.seed = to_u64(value, key);
        else if (key == "rate") a.rate_hz = to_double(value, key);
        else if (key == "aim") a.aim_error = to_double(value, key);
        else if (key == "jitter") a.timing_jitter_ms = to_double(value, key);
        else if (key == "noise") a.noise_deg = to_double(value, key);
        else if (key == "lead") a.lead_ms = to_double(value, key);
        else if (key == "recovery") a.recovery_ms = to_double(value, key);
        else if (key == "tail") a.tail_s = to_double(value, key);
        else bad_spec("unknown autopilot key '" + key + "'");
    }
    if (!(a.rate_hz >= kMinSourceRateHz && a.rate_hz <= kMaxSourceRateHz)) bad_spec("rate must be in [30, 240] Hz");
    if (a.aim_error < 0 || a.timing_jitter_ms < 0 || a.noise_deg < 0) bad_spec("error sigmas must be >= 0");
    return a;
}

HandFrame frame_with(double t_ms, const PerHand<Angles>& angles, const PerHand<Vec3>& palms) {
    HandFrame f;
    f.timestamp_ms = t_ms;
    for (Hand h : kBothHands) {
        if (!angles[h]) continue;
        const HandOrientation o = synth_inverse(*angles[h]);
        f.hands[h] = HandPose{palms[h].value_or(Vec3{}), o.hand_direction, o.palm_normal, 1.0};
    }
    return f;
}

}  // namespace

// ---------------------------------------------------------------------------

HandOrientation synth_inverse(const Angles& angles) {
    const double fe = clamp_angle(angles.flexion_extension) * kDeg;
    const double dev = clamp_angle(angles.deviation) * kDeg;
    const double cf = std::cos(fe), sf = std::sin(fe), cd = std::cos(dev), sd = std::sin(dev);
    return {Vec3{cf * sd, sf, -cf * cd}, Vec3{sf * sd, -cf, -sf * cd}};
}

double Waveform::at(double t_s) const {
    switch (shape) {
        case Shape::Constant: return a;
        case Shape::Sine: return a * std::sin(2.0 * std::numbers::pi * b * t_s + c * kDeg);
        case Shape::Sweep:
            if (c <= 0.0 || t_s >= c) return b;
            return a + (b - a) * std::max(t_s, 0.0) / c;
    }
    return 0.0;
}

double keyed_gaussian(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    const std::uint64_t key = mix64(seed ^ mix64(a ^ mix64(b ^ mix64(c))));
    const double u1 = to_unit_double(mix64(key ^ 0x5851F42D4C957F2DULL));
    const double u2 = to_unit_double(mix64(key ^ 0x14057B7EF767814FULL));
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void validate_synthetic(const SyntheticSpec& spec) {
    if (!(spec.rate_hz >= kMinSourceRateHz && spec.rate_hz <= kMaxSourceRateHz))
        throw Error(ErrorCode::InvalidArgument, "synthetic rate must be in [30, 240] Hz");
    if (!(spec.duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "synthetic duration must be > 0");
    if (!(spec.noise_amplitude >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise must be >= 0");
    for (Hand h : kBothHands) {
        for (const Waveform* w : {&spec[h].flexion_extension, &spec[h].deviation}) {
            if (w->shape == Waveform::Shape::Sine) {
                if (!(std::abs(w->a) <= kMaxAngle))
                    throw Error(ErrorCode::InvalidArgument, "sine amplitude must be <= 90 degrees");
                if (!(w->b > 0.0 && w->b <= 5.0))
                    throw Error(ErrorCode::InvalidArgument, "sine frequency must be in (0, 5] Hz");
            } else if (w->shape == Waveform::Shape::Sweep) {
                if (!(w->c > 0.0)) throw Error(ErrorCode::InvalidArgument, "sweep duration must be > 0");
            }
        }
        for (const auto& iv : spec[h].dropouts)
            if (!(iv.end_ms > iv.start_ms)) throw Error(ErrorCode::InvalidArgument, "dropout intervals need start < end");
    }
}

Angles synthetic_angles(const SyntheticSpec& spec, Hand hand, double t_ms) {
    const auto& h = spec[hand];
    return {h.flexion_extension.at(t_ms / 1000.0), h.deviation.at(t_ms / 1000.0)};
}

HandFrame synthetic_frame(const SyntheticSpec& spec, std::uint64_t index) {
    const double t = static_cast<double>(index) * 1000.0 / spec.rate_hz;
    PerHand<Angles> angles;
    PerHand<Vec3> palms;
    for (Hand h : kBothHands) {
        const auto& hs = spec[h];
        if (!hs.enabled) continue;
        const bool dropped = std::any_of(hs.dropouts.begin(), hs.dropouts.end(),
                                         [&](const Interval& iv) { return t >= iv.start_ms && t < iv.end_ms; });
        if (dropped) continue;
        Angles a = synthetic_angles(spec, h, t);
        if (spec.noise_amplitude > 0.0) {
            const auto hi = static_cast<std::uint64_t>(h);
            a.flexion_extension += spec.noise_amplitude * keyed_gaussian(spec.seed, index, hi, 0);
            a.deviation += spec.noise_amplitude * keyed_gaussian(spec.seed, index, hi, 1);
        }
        angles[h] = Angles{clamp_angle(a.flexion_extension), clamp_angle(a.deviation)};
        palms[h] = hs.palm_position;
    }
    return frame_with(t, angles, palms);
}

SyntheticSource::SyntheticSource(SyntheticSpec spec) : spec_(std::move(spec)) {
    validate_synthetic(spec_);
    count_ = static_cast<std::uint64_t>(std::floor(spec_.duration_s * spec_.rate_hz)) + 1;
}

std::optional<HandFrame> SyntheticSource::next_frame() {
    if (index_ >= count_) return std::nullopt;
    return synthetic_frame(spec_, index_++);
}

// ---------------------------------------------------------------------------

TraceSource::TraceSource(const std::string& path) { load(read_text_file(path), path); }

TraceSource TraceSource::from_text(std::string_view text, const std::string& name) {
    TraceSource t;
    t.load(text, name);
    return t;
}

void TraceSource::load(std::string_view text, const std::string& name) {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            const json doc = json::parse(line);
            if (!doc.is_object()) throw Error(ErrorCode::ParseError, "expected an object");
            auto type = doc.find("type");
            if (type == doc.end()) {
                frames_.push_back(frame_from_json(doc, "frame"));
            } else if (*type == "frame") {
                frames_.push_back(std::get<FrameEntry>(entry_from_json(doc, "frame")).frame);
            }
        } catch (const std::exception& e) {
            throw Error(ErrorCode::TraceParseError, name + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (frames_.size() >= 2) {
        const double span = frames_.back().timestamp_ms - frames_.front().timestamp_ms;
        if (span > 0.0)
            rate_ = std::clamp(static_cast<double>(frames_.size() - 1) * 1000.0 / span, kMinSourceRateHz,
                               kMaxSourceRateHz);
    }
}

std::optional<HandFrame> TraceSource::next_frame() {
    if (next_ >= frames_.size()) return std::nullopt;
    return frames_[next_++];
}

// ---------------------------------------------------------------------------

HandFrame decode_bridge_line(std::string_view line) {
    try {
        const json doc = json::parse(line);
        HandFrame f;
        if (doc.is_object() && doc.contains("type")) {
            if (doc["type"] != "frame") throw Error(ErrorCode::ParseError, "bridge lines carry frames only");
            f = frame_from_json(doc.at("frame"), "frame");
        } else {
            f = frame_from_json(doc, "frame");
        }
        validate_frame(f);
        return f;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::MalformedFrame) throw;
        throw Error(ErrorCode::MalformedFrame, std::string("bridge frame: ") + e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorCode::MalformedFrame, std::string("bridge frame: ") + e.what());
    }
}

std::string encode_bridge_line(const HandFrame& frame) { return frame_to_json(frame).dump() + "\n"; }

BridgeSource::BridgeSource(const std::string& host, std::uint16_t port, double nominal_rate)
    : rate_(nominal_rate) {
    try {
        stream_ = net::TcpStream::connect(host, port);
    } catch (const Error& e) {
        throw Error(ErrorCode::BridgeDisconnected, e.what());
    }
}

BridgeSource::BridgeSource(net::TcpStream stream, double nominal_rate) : stream_(std::move(stream)), rate_(nominal_rate) {}

std::optional<HandFrame> BridgeSource::next_frame() {
    for (;;) {
        auto line = stream_.read_line();
        if (!line) return std::nullopt;
        if (line->find_first_not_of(" \t") == std::string::npos) continue;
        return decode_bridge_line(*line);
    }
}

// ---------------------------------------------------------------------------

AutopilotSource::AutopilotSource(const Level& level, const PatientProfile& profile, GameMode mode, AutopilotSpec spec)
    : level_(level), profile_(profile), mode_(mode), spec_(spec) {
    if (!(spec_.rate_hz >= kMinSourceRateHz && spec_.rate_hz <= kMaxSourceRateHz))
        throw Error(ErrorCode::InvalidArgument, "autopilot rate must be in [30, 240] Hz");
    count_ = static_cast<std::uint64_t>(std::floor((level_.duration + spec_.tail_s) * spec_.rate_hz)) + 1;

    const auto& els = level_.elements;
    if (level_.kind == GameKind::Rhythm) {
        for (const auto& e : els) hands_ |= std::get<RhythmNote>(e).lane == Hand::Left ? 1 : 2;
    }
    if (hands_ == 0) {
        if (mode_ == GameMode::TwoHands || (level_.kind == GameKind::Rhythm && profile_.handedness == Handedness::Both))
            hands_ = 3;
        else
            hands_ = profile_.handedness == Handedness::Left ? 1 : 2;
    }

    for (std::size_t i = 0; i < els.size(); ++i) {
        const double t = element_time(els[i]) * 1000.0;
        const double e1 = spec_.aim_error * keyed_gaussian(spec_.seed, 11, i, 0);
        const double e2 = spec_.aim_error * keyed_gaussian(spec_.seed, 11, i, 1);
        if (const auto* n = std::get_if<RhythmNote>(&els[i])) {
            const double jitter = spec_.timing_jitter_ms * keyed_gaussian(spec_.seed, 12, i, 0);
            presses_.push_back({n->lane, t - spec_.lead_ms + jitter});
        } else if (const auto* f = std::get_if<FlappyPipe>(&els[i])) {
            targets_.push_back({t, std::clamp(f->gap_center + e1, 0.0, 1.0), 0.0});
        } else if (const auto* g = std::get_if<SkiGate>(&els[i])) {
            targets_.push_back({t, std::clamp(g->center + e1, -1.0, 1.0), 0.0});
        } else if (const auto* r = std::get_if<PlaneRing>(&els[i])) {
            targets_.push_back({t, std::clamp(r->center_yaw + e1, -1.0, 1.0), std::clamp(r->center_pitch + e2, -1.0, 1.0)});
        }
    }
    if (level_.kind == GameKind::Flappy && mode_ == GameMode::Impulse) {
        // Open-loop flapping at the hover period of the impulse physics.
        const LevelDifficulty d = level_.difficulty.value_or(LevelDifficulty{});
        const double period = std::max(2.0 * d.impulse_velocity / d.gravity * 1000.0, 400.0);
        const Hand h = (hands_ & 2) ? Hand::Right : Hand::Left;
        for (double t = 200.0; t < (level_.duration + spec_.tail_s) * 1000.0; t += period) {
            const double jitter = spec_.timing_jitter_ms * keyed_gaussian(spec_.seed, 13, presses_.size(), 0);
            presses_.push_back({h, t + jitter});
        }
    }
    std::stable_sort(presses_.begin(), presses_.end(),
                     [](const Press& a, const Press& b) { return a.start_ms < b.start_ms; });
}

// Rhythm presses sweep toward flexion; flappy flaps mirror them toward
// extension. A new motion starts from wherever the previous one left the
// wrist, so a hurried press sweeps less.
double AutopilotSource::press_angle(Hand hand, double t_ms) const {
    const double dir = level_.kind == GameKind::Flappy ? -1.0 : 1.0;
    const double rest = dir * spec_.rest_deg;
    const double depth = dir * spec_.press_depth_deg;
    const double down_end = spec_.press_ms;
    const double hold_end = down_end + spec_.hold_ms;
    const double rec_end = hold_end + spec_.recovery_ms;

    double value = rest;
    double start = -1e300;
    double from = rest;
    auto at = [&](double tau) {
        if (tau < down_end) return from + (depth - from) * ease(tau / spec_.press_ms);
        if (tau < hold_end) return depth;
        if (tau < rec_end) return depth + (rest - depth) * ease((tau - hold_end) / spec_.recovery_ms);
        return rest;
    };
    for (const auto& p : presses_) {
        if (p.hand != hand) continue;
        if (p.start_ms > t_ms) break;
        if (start > -1e300) from = at(p.start_ms - start);
        start = p.start_ms;
    }
    if (start > -1e300) value = at(t_ms - start);
    return value;
}

std::pair<double, double> AutopilotSource::tracked(double t_ms) const {
    double prev_t = 0.0;
    std::pair<double, double> prev{level_.kind == GameKind::Flappy ? 0.5 : 0.0, 0.0};
    for (const auto& tg : targets_) {
        if (t_ms < tg.time_ms) {
            const double span = tg.time_ms - prev_t;
            const double u = span > 0.0 ? ease((t_ms - prev_t) / span) : 1.0;
            return {prev.first + (tg.primary - prev.first) * u, prev.second + (tg.secondary - prev.second) * u};
        }
        prev_t = tg.time_ms;
        prev = {tg.primary, tg.secondary};
    }
    return prev;
}

WristAngles AutopilotSource::intended_angles(double t_ms) const {
    const auto& p = profile_;
    Angles a;
    WristAngles out;
    switch (level_.kind) {
        case GameKind::Rhythm:
            for (Hand h : kBothHands)
                if (hands_ & (h == Hand::Left ? 1 : 2)) out[h] = Angles{press_angle(h, t_ms), 0.0};
            return out;
        case GameKind::Flappy:
            if (mode_ == GameMode::Impulse) {
                a.flexion_extension = press_angle((hands_ & 2) ? Hand::Right : Hand::Left, t_ms);
            } else {
                a.flexion_extension = height_angle_for(tracked(t_ms).first, p.rom_flexion_max, p.rom_extension_max);
            }
            break;
        case GameKind::Skiing: {
            const double x = tracked(t_ms).first;
            if (mode_ == GameMode::Deviation) a.deviation = lateral_angle_for(x, p.rom_deviation_left_max, p.rom_deviation_right_max);
            else if (p.ski_rotated_sign > 0) a.flexion_extension = lateral_angle_for(x, p.rom_flexion_max, p.rom_extension_max);
            else a.flexion_extension = -lateral_angle_for(x, p.rom_extension_max, p.rom_flexion_max);
            break;
        }
        case GameKind::Plane: {
            const auto [yaw, pitch] = tracked(t_ms);
            a.deviation = lateral_angle_for(yaw, p.rom_deviation_left_max, p.rom_deviation_right_max);
            a.flexion_extension = height_angle_for((pitch + 1.0) / 2.0, p.rom_flexion_max, p.rom_extension_max);
            break;
        }
    }
    for (Hand h : kBothHands)
        if (hands_ & (h == Hand::Left ? 1 : 2)) out[h] = a;
    return out;
}

std::optional<HandFrame> AutopilotSource::next_frame() {
    if (index_ >= count_) return std::nullopt;
    const std::uint64_t i = index_++;
    const double t = static_cast<double>(i) * 1000.0 / spec_.rate_hz;
    WristAngles angles = intended_angles(t);
    PerHand<Vec3> palms;
    for (Hand h : kBothHands) {
        if (!angles[h]) continue;
        const auto hi = static_cast<std::uint64_t>(h);
        angles[h]->flexion_extension =
            clamp_angle(angles[h]->flexion_extension + spec_.noise_deg * keyed_gaussian(spec_.seed, i, hi, 20));
        angles[h]->deviation = clamp_angle(angles[h]->deviation + spec_.noise_deg * keyed_gaussian(spec_.seed, i, hi, 21));
        palms[h] = Vec3{h == Hand::Left ? -10.0 : 10.0, 20.0, 0.0};
    }
    return frame_with(t, angles, palms);
}

// ---------------------------------------------------------------------------

SourceSpec parse_source_spec(std::string_view text) {
    const auto colon = text.find(':');
    const std::string_view kind = text.substr(0, colon);
    const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
    if (kind == "synthetic") return parse_synthetic(rest);
    if (kind == "autopilot") return parse_autopilot(rest);
    if (kind == "trace") {
        if (rest.empty()) bad_spec("trace needs a path (trace:<path>)");
        return TraceSpec{std::string(rest)};
    }
    if (kind == "bridge") {
        const auto c = rest.rfind(':');
        if (c == std::string_view::npos) bad_spec("bridge needs host:port");
        const auto port = to_u64(std::string(rest.substr(c + 1)), "port");
        if (port == 0 || port > 65535) bad_spec("bridge port out of range");
        return BridgeSpec{std::string(rest.substr(0, c)), static_cast<std::uint16_t>(port)};
    }
    bad_spec("unknown source kind '" + std::string(kind) + "' (synthetic|trace|bridge|autopilot)");
}

std::unique_ptr<FrameSource> make_source(const SourceSpec& spec, const Level& level, const PatientProfile& profile,
                                         GameMode mode) {
    struct {
        const Level& level;
        const PatientProfile& profile;
        GameMode mode;
        std::unique_ptr<FrameSource> operator()(const SyntheticSpec& s) { return std::make_unique<SyntheticSource>(s); }
        std::unique_ptr<FrameSource> operator()(const TraceSpec& s) { return std::make_unique<TraceSource>(s.path); }
        std::unique_ptr<FrameSource> operator()(const BridgeSpec& s) {
            return std::make_unique<BridgeSource>(s.host, s.port);
        }
        std::unique_ptr<FrameSource> operator()(const AutopilotSpec& s) {
            return std::make_unique<AutopilotSource>(level, profile, mode, s);
        }
    } visitor{level, profile, mode};
    return std::visit(visitor, spec);
}

}  // namespace wr
