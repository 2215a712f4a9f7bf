#include "wristrehab/cli.hpp"

#include "json_util.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <map>
#include <ostream>
#include <pthread.h>

#include <fmt/format.h>

#include "wristrehab/codec.hpp"
#include "wristrehab/digest.hpp"
#include "wristrehab/error.hpp"
#include "wristrehab/fileio.hpp"
#include "wristrehab/input_sources.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/profiles.hpp"
#include "wristrehab/service.hpp"
#include "wristrehab/session_store.hpp"

namespace wr {

namespace {

/// A validation failure carrying the offending fields.
class Invalid : public Error {
public:
    Invalid(std::string message, Violations v, ErrorCode code = ErrorCode::ValidationFailed)
        : Error(code, std::move(message)), violations(std::move(v)) {}
    Violations violations;
};

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::Io:
        case ErrorCode::BridgeDisconnected: return kExitIo;
        default: return kExitValidation;
    }
}

GameKind parse_kind(const std::string& text) {
    auto k = game_kind_from_string(text);
    if (!k) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown game '{}'", text));
    return *k;
}

GameMode parse_mode(const std::string& text) {
    auto m = game_mode_from_string(text);
    if (!m) throw Error(ErrorCode::IllegalMode, fmt::format("unknown mode '{}'", text));
    return *m;
}

PatientProfile checked_profile(const std::string& path) {
    PatientProfile p = read_profile_file(path);
    if (auto v = validate_profile(p); !v.empty()) throw Invalid(fmt::format("profile {} is invalid", path), v);
    return p;
}

void emit(std::ostream& out, const json& j) { out << j.dump() << '\n'; }

json event_counts(const std::vector<SessionEntry>& entries) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& e : entries)
        if (const auto* ev = std::get_if<EventEntry>(&e)) ++counts[std::string(event_name(ev->event))];
    return counts;
}

// -- play -------------------------------------------------------------------

struct PlayOpts {
    std::string game, mode, profile, level, source = "synthetic", out, session_id;
    double smoothing = kDefaultSmoothingAlpha;
    std::int64_t tick_ms = kTickMs;
};

int play(const PlayOpts& o, std::ostream& out, std::ostream& err) {
    const PatientProfile profile = checked_profile(o.profile);
    const Level level = read_level_file(o.level);
    const GameKind kind = parse_kind(o.game);
    const GameMode mode = o.mode.empty() ? default_mode(kind) : parse_mode(o.mode);
    if (level.kind != kind)
        throw Error(ErrorCode::InvalidLevel,
                    fmt::format("level {} is a {} level, not {}", o.level, to_string(level.kind), o.game));
    if (!mode_allowed(kind, mode))
        throw Error(ErrorCode::IllegalMode, fmt::format("mode {} is not available for {}", o.mode, o.game));
    if (auto v = validate_level(level, profile); !v.empty())
        throw Invalid(fmt::format("level {} is invalid for this profile", o.level), v);

    auto source = make_source(parse_source_spec(o.source), level, profile, mode);

    SessionSetup setup;
    setup.kind = kind;
    setup.mode = mode;
    setup.level = level;
    setup.profile = profile;
    setup.engine.smoothing_alpha = o.smoothing;
    setup.engine.tick_ms = o.tick_ms;
    setup.start_wall_clock = utc_now_iso8601();
    // Same inputs, same id: reruns produce identical session bodies.
    setup.session_id = !o.session_id.empty()
                           ? o.session_id
                           : "play-" + sha256_hex(fmt::format("{}|{}|{}|{}|{}|{}|{}", to_string(kind), to_string(mode),
                                                              sha256_hex(save_profile(profile)),
                                                              sha256_hex(save_level(level)), o.source, o.smoothing,
                                                              o.tick_ms))
                                           .substr(0, 16);

    const SessionRun run = run_session(setup, *source, o.out);
    const SessionFooter& f = run.record.footer;
    emit(out, {{"session_id", setup.session_id},
               {"out", o.out},
               {"final_score", f.final_score},
               {"status", status_to_json(f.status)},
               {"elapsed_ms", f.elapsed_ms},
               {"entry_count", f.entry_count},
               {"events", event_counts(run.record.entries)}});
    err << fmt::format("{} {}: score {} ({} after {:.2f} s), {} entries written to {}\n", to_string(kind),
                       to_string(mode), f.final_score, to_string(f.status.state), f.elapsed_ms / 1000.0,
                       f.entry_count, o.out);
    return kExitOk;
}

// -- replay / stats -----------------------------------------------------------

int replay_cmd(const std::string& path, bool verify, std::ostream& out, std::ostream& err) {
    const SessionRecord record = read_session_file(path);
    if (!verify) {
        json events = json::array();
        for (const auto& e : record.entries)
            if (const auto* ev = std::get_if<EventEntry>(&e)) events.push_back(event_to_json(ev->event));
        emit(out, {{"session", session_summary_json(record)}, {"events", events}});
        err << fmt::format("{}: {} events (integrity ok, not re-simulated)\n", path, events.size());
        return kExitOk;
    }
    const ReplayReport rep = replay(record);
    emit(out, {{"session", session_summary_json(record)},
               {"verified", true},
               {"ticks", rep.ticks},
               {"digests_checked", rep.digests_checked},
               {"events", rep.events.size()}});
    err << fmt::format("{}: replay verified, {} ticks, {} digests, {} events\n", path, rep.ticks,
                       rep.digests_checked, rep.events.size());
    return kExitOk;
}

int stats_cmd(const std::string& path, const std::string& csv, std::ostream& out, std::ostream& err) {
    const SessionRecord record = read_session_file(path);
    if (!csv.empty()) {
        out << export_timeseries(record, angle_channel_from_string(csv));
        return kExitOk;
    }
    const SessionStats s = statistics(record);
    json body = session_summary_json(record);
    body["stats"] = stats_to_json(s);
    emit(out, body);
    err << fmt::format("{}: {:.1f} s, {} frames, {} hits, {} misses, score {}\n", path, s.duration_s, s.frame_count,
                       s.hits, s.misses, s.score);
    return kExitOk;
}

// -- levels -------------------------------------------------------------------

struct GenOpts {
    std::string game, profile, constraints, out, lanes;
    std::uint64_t seed = 0;
    std::optional<double> duration, rom_fraction, min_spacing, gap_height, gate_width, ring_radius;
    std::optional<int> count;
};

int gen_level(const GenOpts& o, std::ostream& out, std::ostream& err) {
    const GameKind kind = parse_kind(o.game);
    const PatientProfile profile = checked_profile(o.profile);
    GenConstraints c;
    if (!o.constraints.empty()) c = constraints_from_json(detail::parse_document(read_text_file(o.constraints)));
    if (o.duration) c.duration = *o.duration;
    if (o.count) c.element_count = *o.count;
    if (o.rom_fraction) c.rom_fraction = *o.rom_fraction;
    if (o.min_spacing) c.min_spacing = *o.min_spacing;
    if (o.gap_height) c.gap_height = *o.gap_height;
    if (o.gate_width) c.gate_width = *o.gate_width;
    if (o.ring_radius) c.ring_radius = *o.ring_radius;
    if (!o.lanes.empty()) {
        auto h = handedness_from_string(o.lanes);
        if (!h) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown lanes '{}'", o.lanes));
        c.lanes = *h;
    }
    if (auto v = validate_constraints(kind, c); !v.empty()) throw Invalid("constraints are invalid", v, ErrorCode::InvalidConstraints);

    const Level level = generate_level(kind, c, profile, o.seed);
    const std::string text = save_level(level);
    if (o.out.empty()) out << text << '\n';
    else write_file_atomic(o.out, text);
    err << fmt::format("{} level: {} elements over {} s (seed {}){}\n", to_string(kind), level.elements.size(),
                       level.duration, o.seed, o.out.empty() ? "" : ", written to " + o.out);
    return kExitOk;
}

struct ValidateOpts {
    std::string profile, level, constraints, game;
};

int validate_cmd(const ValidateOpts& o, std::ostream& out, std::ostream& err) {
    if (o.profile.empty() && o.level.empty() && o.constraints.empty())
        throw Error(ErrorCode::InvalidArgument, "nothing to validate: pass --profile, --level or --constraints");
    json report = json::object();
    bool ok = true;
    auto add = [&](const char* what, const Violations& v) {
        report[what] = {{"valid", v.empty()}, {"violations", violations_to_json(v)}};
        ok = ok && v.empty();
        for (const auto& x : v) err << fmt::format("{}: {}: {}\n", what, x.field, x.message);
    };
    std::optional<PatientProfile> profile;
    if (!o.profile.empty()) {
        profile = read_profile_file(o.profile);
        add("profile", validate_profile(*profile));
    }
    if (!o.level.empty()) {
        const Level level = read_level_file(o.level);
        // Without a patient the ROM checks use the stock profile.
        add("level", validate_level(level, profile.value_or(PatientProfile{})));
    }
    if (!o.constraints.empty()) {
        if (o.game.empty()) throw Error(ErrorCode::InvalidArgument, "--constraints needs --game");
        add("constraints", validate_constraints(parse_kind(o.game),
                                                constraints_from_json(detail::parse_document(
                                                    read_text_file(o.constraints)))));
    }
    report["valid"] = ok;
    emit(out, report);
    err << (ok ? "valid\n" : "invalid\n");
    return ok ? kExitOk : kExitValidation;
}

struct AuthorOpts {
    std::string script, base, profile, out;
};

int author_cmd(const AuthorOpts& o, std::ostream& out, std::ostream& err) {
    const LevelScript script = load_level_script(read_text_file(o.script));
    Level level;
    if (o.base.empty()) {
        level = author_level(script.kind, script.edits);
    } else {
        level = read_level_file(o.base);
        if (level.kind != script.kind)
            throw Error(ErrorCode::InvalidArgument, fmt::format("script edits a {} level but {} is a {} level",
                                                                to_string(script.kind), o.base, to_string(level.kind)));
        level = apply_edits(std::move(level), script.edits);
    }
    if (!o.profile.empty()) {
        if (auto v = validate_level(level, checked_profile(o.profile)); !v.empty())
            throw Invalid("authored level is invalid for this profile", v);
    }
    const std::string text = save_level(level);
    if (o.out.empty()) out << text << '\n';
    else write_file_atomic(o.out, text);
    err << fmt::format("{} level with {} elements{}\n", to_string(level.kind), level.elements.size(),
                       o.out.empty() ? "" : ", written to " + o.out);
    return kExitOk;
}

// -- serve --------------------------------------------------------------------

struct ServeOpts {
    std::string bind = "127.0.0.1", storage;
    std::uint16_t http_port = 8080, stream_port = 8081;
    std::int64_t tick_ms = kTickMs;
    std::int64_t grace_ms = 5000;
};

int serve(const ServeOpts& o, std::ostream& out, std::ostream& err) {
    // Handle SIGINT/SIGTERM synchronously; worker threads inherit the mask.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    ServiceConfig cfg;
    cfg.storage_root = resolve_storage_root(o.storage.empty() ? std::nullopt : std::optional(o.storage));
    cfg.bind_host = o.bind;
    cfg.http_port = o.http_port;
    cfg.stream_port = o.stream_port;
    cfg.tick_ms = o.tick_ms;
    cfg.disconnect_grace = std::chrono::milliseconds(o.grace_ms);
    Service service(cfg);
    service.start();
    emit(out, {{"http_port", service.http_port()},
               {"stream_port", service.stream_port()},
               {"storage", cfg.storage_root.string()},
               {"bind", cfg.bind_host}});
    out.flush();
    err << fmt::format("serving catalog on http://{}:{} and live stream on {}:{} (storage {})\n", cfg.bind_host,
                       service.http_port(), cfg.bind_host, service.stream_port(), cfg.storage_root.string());
    int sig = 0;
    sigwait(&set, &sig);
    err << "shutting down\n";
    service.stop();
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Wrist rehabilitation games: play, replay, analyze, generate levels, serve."};
    app.require_subcommand(1);
    app.set_config("--config", "", "Optional TOML/INI config file; flags win");

    PlayOpts play_o;
    auto* play_cmd = app.add_subcommand("play", "Run a deterministic session and record it");
    play_cmd->add_option("--game", play_o.game, "Rhythm | Flappy | Skiing | Plane")->required();
    play_cmd->add_option("--mode", play_o.mode, "Game mode (default: the game's default)");
    play_cmd->add_option("--profile", play_o.profile, "Patient profile file")->required();
    play_cmd->add_option("--level", play_o.level, "Level file")->required();
    play_cmd->add_option("--source", play_o.source, "synthetic[:...] | trace:<path> | bridge:<host>:<port> | autopilot[:...]");
    play_cmd->add_option("--out", play_o.out, "Session file to write")->required();
    play_cmd->add_option("--session-id", play_o.session_id, "Override the derived session id");
    play_cmd->add_option("--smoothing", play_o.smoothing, "EMA smoothing factor");
    play_cmd->add_option("--tick-ms", play_o.tick_ms, "Engine tick in ms");

    std::string replay_path;
    bool verify = false;
    auto* replay_sub = app.add_subcommand("replay", "Print a session's events, or re-simulate with --verify");
    replay_sub->add_option("--session", replay_path, "Session file")->required();
    replay_sub->add_flag("--verify", verify, "Re-simulate and check every event and tick digest");

    std::string stats_path, csv;
    auto* stats_sub = app.add_subcommand("stats", "Session statistics, or one channel as CSV");
    stats_sub->add_option("--session", stats_path, "Session file")->required();
    stats_sub->add_option("--csv", csv, "Channel: flexion_extension_left|right, deviation_left|right");

    GenOpts gen_o;
    auto* gen_sub = app.add_subcommand("gen-level", "Generate a level from constraints and a seed");
    gen_sub->add_option("--game", gen_o.game, "Rhythm | Flappy | Skiing | Plane")->required();
    gen_sub->add_option("--seed", gen_o.seed, "Generator seed")->required();
    gen_sub->add_option("--profile", gen_o.profile, "Patient profile file")->required();
    gen_sub->add_option("--constraints", gen_o.constraints, "Constraints file (flags override it)");
    gen_sub->add_option("--duration", gen_o.duration, "Level duration, s");
    gen_sub->add_option("--count", gen_o.count, "Element count");
    gen_sub->add_option("--rom-fraction", gen_o.rom_fraction, "Fraction of the patient's ROM to use");
    gen_sub->add_option("--min-spacing", gen_o.min_spacing, "Minimum element spacing, s");
    gen_sub->add_option("--lanes", gen_o.lanes, "Rhythm lanes: Left | Right | Both");
    gen_sub->add_option("--gap-height", gen_o.gap_height, "Flappy gap height");
    gen_sub->add_option("--gate-width", gen_o.gate_width, "Skiing gate width");
    gen_sub->add_option("--ring-radius", gen_o.ring_radius, "Plane ring radius");
    gen_sub->add_option("--out", gen_o.out, "Level file to write (default stdout)");

    ValidateOpts val_o;
    auto* val_sub = app.add_subcommand("validate", "Validate a profile, a level and/or constraints");
    val_sub->add_option("--profile", val_o.profile, "Patient profile file");
    val_sub->add_option("--level", val_o.level, "Level file (checked against --profile if given)");
    val_sub->add_option("--constraints", val_o.constraints, "Constraints file");
    val_sub->add_option("--game", val_o.game, "Game for --constraints");

    AuthorOpts auth_o;
    auto* auth_sub = app.add_subcommand("author", "Apply an edit script to a new or existing level");
    auth_sub->add_option("--script", auth_o.script, "Edit script file")->required();
    auth_sub->add_option("--base", auth_o.base, "Level to edit (default: empty level)");
    auth_sub->add_option("--profile", auth_o.profile, "Validate the result against this profile");
    auth_sub->add_option("--out", auth_o.out, "Level file to write (default stdout)");

    ServeOpts serve_o;
    auto* serve_sub = app.add_subcommand("serve", "Run the catalog and live session service");
    serve_sub->add_option("--bind", serve_o.bind, "Bind address");
    serve_sub->add_option("--http-port", serve_o.http_port, "Catalog port (0 = any)");
    serve_sub->add_option("--stream-port", serve_o.stream_port, "Live stream port (0 = any)");
    serve_sub->add_option("--storage", serve_o.storage, std::string("Storage root (else $") + kStorageEnvVar + ")");
    serve_sub->add_option("--tick-ms", serve_o.tick_ms, "Engine tick in ms");
    serve_sub->add_option("--grace-ms", serve_o.grace_ms, "Disconnect grace in ms");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return kExitValidation;
    }

    try {
        if (play_cmd->parsed()) return play(play_o, out, err);
        if (replay_sub->parsed()) return replay_cmd(replay_path, verify, out, err);
        if (stats_sub->parsed()) return stats_cmd(stats_path, csv, out, err);
        if (gen_sub->parsed()) return gen_level(gen_o, out, err);
        if (val_sub->parsed()) return validate_cmd(val_o, out, err);
        if (auth_sub->parsed()) return author_cmd(auth_o, out, err);
        if (serve_sub->parsed()) return serve(serve_o, out, err);
    } catch (const Invalid& e) {
        emit(out, {{"error", {{"code", to_string(e.code())}, {"message", e.what()},
                              {"violations", violations_to_json(e.violations)}}}});
        err << "error: " << e.what() << '\n';
        for (const auto& v : e.violations) err << fmt::format("  {}: {}\n", v.field, v.message);
        return kExitValidation;
    } catch (const Error& e) {
        emit(out, {{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}});
        err << "error: " << e.what() << '\n';
        return exit_code(e.code());
    }
    return kExitValidation;
}

}  // namespace wr
