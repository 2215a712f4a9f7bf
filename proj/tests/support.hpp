#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "wristrehab/gamecore.hpp"
#include "wristrehab/input_sources.hpp"
#include "wristrehab/levelgen.hpp"
#include "wristrehab/profiles.hpp"

namespace wr::test {

inline PatientProfile profile(Handedness h = Handedness::Right) {
    PatientProfile p;
    p.patient_id = "p001";
    p.handedness = h;
    p.session_length = 120.0;
    return p;
}

inline Level rhythm_level(const std::vector<double>& times, Hand lane = Hand::Right, double duration = 0.0) {
    Level l;
    l.kind = GameKind::Rhythm;
    for (double t : times) l.elements.push_back(RhythmNote{t, lane});
    l.duration = duration > 0.0 ? duration : (times.empty() ? 10.0 : times.back() + 2.0);
    return l;
}

/// Frame with the given angles for the enabled hands, through the inverse.
inline HandFrame frame_at(double t_ms, std::optional<Angles> left, std::optional<Angles> right) {
    HandFrame f;
    f.timestamp_ms = t_ms;
    if (left) {
        const auto o = synth_inverse(*left);
        f.hands.left = HandPose{Vec3{-10.0, 20.0, 0.0}, o.hand_direction, o.palm_normal, 1.0};
    }
    if (right) {
        const auto o = synth_inverse(*right);
        f.hands.right = HandPose{Vec3{10.0, 20.0, 0.0}, o.hand_direction, o.palm_normal, 1.0};
    }
    return f;
}

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("wristrehab-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace wr::test
