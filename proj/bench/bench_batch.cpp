// Serial reference versus OpenMP kernels.

#include <benchmark/benchmark.h>

#include <numeric>

#include "wristrehab/batch.hpp"
#include "wristrehab/input_sources.hpp"
#include "wristrehab/session_store.hpp"

using namespace wr;

namespace {

const std::vector<HandFrame>& frames() {
    static const std::vector<HandFrame> f = [] {
        SyntheticSpec spec;
        spec.left.enabled = true;
        spec.left.flexion_extension = Waveform::sine(40, 0.8);
        spec.right.deviation = Waveform::sine(25, 0.4);
        spec.noise_amplitude = 2;
        std::vector<HandFrame> out;
        for (std::uint64_t i = 0; i < 200000; ++i) out.push_back(synthetic_frame(spec, i));
        return out;
    }();
    return f;
}

const std::vector<std::string>& sessions() {
    static const std::vector<std::string> s = [] {
        std::vector<std::string> out;
        PatientProfile p;
        p.patient_id = "bench";
        Level level;
        level.kind = GameKind::Rhythm;
        level.duration = 30.0;
        for (int i = 1; i < 30; ++i) level.elements.push_back(RhythmNote{static_cast<double>(i), Hand::Right});
        for (std::uint64_t k = 0; k < 16; ++k) {
            SyntheticSpec spec;
            spec.right.flexion_extension = Waveform::sine(30, 1);
            spec.noise_amplitude = 1;
            spec.seed = k;
            spec.duration_s = 20;
            SyntheticSource src(spec);
            out.push_back(run_session({"b" + std::to_string(k), GameKind::Rhythm, GameMode::Standard, level, p, {}, "t"},
                                      src)
                              .bytes);
        }
        return out;
    }();
    return s;
}

std::vector<std::uint64_t> seeds(std::size_t n) {
    std::vector<std::uint64_t> s(n);
    std::iota(s.begin(), s.end(), 1);
    return s;
}

GenConstraints constraints() {
    GenConstraints gc;
    gc.duration = 120;
    gc.element_count = 60;
    gc.min_spacing = 1.5;
    return gc;
}

void BM_AnglesSerial(benchmark::State& st) {
    frames();  // build the fixture outside the timed loop
    for (auto _ : st) benchmark::DoNotOptimize(batch::angles_serial(frames(), {}));
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(frames().size()));
}
void BM_AnglesParallel(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(batch::angles_parallel(frames(), {}));
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(frames().size()));
}
void BM_VerifySerial(benchmark::State& st) {
    sessions();
    for (auto _ : st) benchmark::DoNotOptimize(batch::verify_serial(sessions()));
}
void BM_VerifyParallel(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(batch::verify_parallel(sessions()));
}
void BM_SweepSerial(benchmark::State& st) {
    const auto s = seeds(500);
    PatientProfile p;
    for (auto _ : st) benchmark::DoNotOptimize(batch::sweep_serial(GameKind::Skiing, constraints(), p, s));
}
void BM_SweepParallel(benchmark::State& st) {
    const auto s = seeds(500);
    PatientProfile p;
    for (auto _ : st) benchmark::DoNotOptimize(batch::sweep_parallel(GameKind::Skiing, constraints(), p, s));
}

}  // namespace

BENCHMARK(BM_AnglesSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AnglesParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VerifySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VerifyParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
