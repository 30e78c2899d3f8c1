#include <catch_amalgamated.hpp>

#include <sstream>

#include "ddmqkd/waveform_codec.hpp"

using namespace ddmqkd;
using Catch::Approx;

namespace {

SymbolFrame frame_of(Protocol p, std::vector<Symbol> symbols)
{
    SymbolFrame f;
    f.protocol = p;
    f.qubit_period = p == Protocol::DPS ? f.tau : 2.0 * f.tau;
    f.symbols = std::move(symbols);
    return f;
}

ModulatorConfig bin_sampled()
{
    ModulatorConfig m;
    m.sample_period = default_tau;
    return m;
}

} // namespace

TEST_CASE("level counts per protocol")
{
    const auto bb = random_frame(Protocol::BB84, 64, 0.0, 1);
    const auto w = encode(bb, {}, {});
    CHECK(w.level_count(1) == 2);
    CHECK(w.level_count(2) == 3);

    const auto cow = encode(random_frame(Protocol::COW, 16, 0.2, 1), {}, {});
    CHECK(cow.level_count(1) == 2);
    CHECK(cow.level_count(2) == 2);
    const auto dps = encode(random_frame(Protocol::DPS, 16, 0.0, 1), {}, {});
    CHECK(dps.level_count(1) == 2);
    CHECK(dps.level_count(2) == 2);

    EncoderOptions pp;
    pp.bb84_push_pull = true;
    const auto w4 = encode(bb, {}, {}, pp);
    CHECK(w4.level_count(1) == 4);
    CHECK(w4.level_count(2) == 4);
}

TEST_CASE("empty frame encodes to an empty waveform")
{
    const auto w = encode(frame_of(Protocol::COW, {}), {}, {});
    CHECK(w.size() == 0);
    CHECK(w.pulses.empty());
}

TEST_CASE("DPS bits 0,1 give pulse phases 0, 0, pi")
{
    const auto f = frame_of(Protocol::DPS, {{0, Basis::None, false}, {1, Basis::None, false}});
    const auto train = carve_train(encode(f, {}, bin_sampled()), bin_sampled());
    REQUIRE(train.size() == 3);
    const double ref = std::arg(train.samples[0]);
    CHECK(std::remainder(std::arg(train.samples[1]) - ref, 2 * pi) == Approx(0.0).margin(1e-12));
    CHECK(std::abs(std::remainder(std::arg(train.samples[2]) - ref, 2 * pi)) == Approx(pi).epsilon(1e-12));
}

TEST_CASE("DPS adjacent phases are 0 or pi for any bit string")
{
    const auto f = random_frame(Protocol::DPS, 500, 0.0, 9);
    const auto train = carve_train(encode(f, {}, bin_sampled()), bin_sampled());
    for (std::size_t k = 0; k < f.symbols.size(); ++k) {
        const double d = std::remainder(std::arg(train.samples[k + 1]) - std::arg(train.samples[k]), 2 * pi);
        CHECK(std::abs(d) == Approx(f.symbols[k].bit ? pi : 0.0).margin(1e-12));
    }
}

TEST_CASE("frame invariants raise encoding errors")
{
    auto f = frame_of(Protocol::DPS, {{0, Basis::None, true}});
    CHECK_THROWS_AS(encode(f, {}, {}), Error);
    auto g = frame_of(Protocol::BB84, {{0, Basis::None, false}});
    CHECK_THROWS_AS(g.validate(), Error);
    auto h = frame_of(Protocol::COW, {{0, Basis::Z, false}});
    CHECK_THROWS_AS(h.validate(), Error);
    auto q = frame_of(Protocol::COW, {});
    q.qubit_period = q.tau;
    try {
        q.validate();
        FAIL("expected an encoding error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Encoding);
    }
}

TEST_CASE("random_frame statistics and determinism")
{
    const auto none = random_frame(Protocol::COW, 10000, 0.0, 4);
    for (const auto& s : none.symbols)
        CHECK_FALSE(s.decoy);

    const auto f = random_frame(Protocol::COW, 1000000, 0.155, 5);
    std::size_t decoys = 0;
    std::size_t ones = 0;
    for (const auto& s : f.symbols) {
        decoys += s.decoy;
        ones += s.bit;
        if (s.decoy)
            CHECK(s.bit == 0);
    }
    CHECK(decoys / 1e6 == Approx(0.155).margin(0.002));
    CHECK(ones / (1e6 - decoys) == Approx(0.5).margin(0.005));

    CHECK(random_frame(Protocol::BB84, 1000, 0.0, 77) == random_frame(Protocol::BB84, 1000, 0.0, 77));
    CHECK_FALSE(random_frame(Protocol::BB84, 1000, 0.0, 77) == random_frame(Protocol::BB84, 1000, 0.0, 78));
    const auto bb = random_frame(Protocol::BB84, 100000, 0.0, 3);
    std::size_t x = 0;
    for (const auto& s : bb.symbols)
        x += s.basis == Basis::X;
    CHECK(x / 1e5 == Approx(0.5).margin(0.01));

    CHECK_THROWS_AS(random_frame(Protocol::COW, 10, 1.0, 1), Error);
    CHECK_THROWS_AS(random_frame(Protocol::COW, 10, -0.1, 1), Error);
}

namespace {

// Collects per-pulse level deviations relative to the nominal drive.
std::vector<double> deviations(const DriveWaveform& nominal, const DriveWaveform& noisy, int arm)
{
    std::vector<double> d;
    for (std::size_t i = 0; i < nominal.pulses.size(); ++i)
        if (nominal.pulses[i].arm == arm)
            d.push_back(noisy.pulses[i].level - nominal.pulses[i].level);
    return d;
}

} // namespace

TEST_CASE("eye noise: zero spread is the identity")
{
    const auto f = random_frame(Protocol::COW, 100, 0.1, 2);
    const auto w = encode(f, {}, {});
    NoiseModel n;
    n.seed = 5;
    const auto out = apply_eye_noise(w, n);
    CHECK(out.phi1 == w.phi1);
    CHECK(out.phi2 == w.phi2);
}

TEST_CASE("eye noise width scales with the level penalty")
{
    const auto f = random_frame(Protocol::COW, 100000, 0.0, 2);
    ModulatorConfig m = bin_sampled();
    const auto w = encode(f, {}, m);
    NoiseModel n;
    n.base_eye_spread = 0.10;
    n.seed = 8;
    const auto noisy = apply_eye_noise(w, n);
    const double swing = pi / 2.0;
    const auto d = deviations(w, noisy, 1);
    REQUIRE(d.size() == 100000);
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    CHECK(*lo >= -0.05 * swing);
    CHECK(*hi <= 0.05 * swing);
    CHECK((*hi - *lo) / swing == Approx(0.10).margin(0.005));

    EncoderOptions pp;
    pp.bb84_push_pull = true;
    auto bb = random_frame(Protocol::BB84, 50000, 0.0, 3);
    const auto w4 = encode(bb, {}, m, pp);
    const auto d4 = deviations(w4, apply_eye_noise(w4, n), 1);
    const auto [lo4, hi4] = std::minmax_element(d4.begin(), d4.end());
    CHECK((*hi4 - *lo4) / swing == Approx(0.30).margin(0.01));
}

TEST_CASE("gaussian eye noise matches the uniform rms")
{
    const auto f = random_frame(Protocol::COW, 100000, 0.0, 2);
    const auto w = encode(f, {}, bin_sampled());
    NoiseModel n;
    n.base_eye_spread = 0.10;
    n.distribution = NoiseDistribution::Gaussian;
    const auto d = deviations(w, apply_eye_noise(w, n), 2);
    double s2 = 0.0;
    for (double x : d)
        s2 += x * x;
    const double rms = std::sqrt(s2 / d.size());
    CHECK(rms == Approx(0.10 * pi / 2.0 / std::sqrt(12.0)).epsilon(0.02));
}

TEST_CASE("eye noise configuration errors")
{
    DriveWaveform w;
    w.level_set_arm1 = {0.0, 0.5, 1.0, 1.5, 2.0};
    w.pulses = {{1, 400e-12, 2.0}};
    w.render(100);
    NoiseModel n;
    n.base_eye_spread = 0.1;
    CHECK_THROWS_AS(apply_eye_noise(w, n), Error);

    NoiseModel bad;
    bad.level_penalty = {{2, 1.0}, {3, 0.5}};
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("arm mismatch scales each arm symmetrically")
{
    auto f = frame_of(Protocol::COW, {{0, Basis::None, false}});
    const auto w = encode(f, {}, bin_sampled());
    NoiseModel n;
    n.arm_mismatch = 0.2;
    const auto out = apply_eye_noise(w, n);
    CHECK(out.pulses[0].level == Approx(1.1 * pi / 2.0));
    CHECK(out.pulses[1].level == Approx(-0.9 * pi / 2.0));
}

TEST_CASE("COW and BB84-Z pulses do not depend on the bit value")
{
    ModulatorConfig m;
    for (Protocol p : {Protocol::COW, Protocol::BB84}) {
        const Basis b = p == Protocol::BB84 ? Basis::Z : Basis::None;
        const auto t0 = carve_train(encode(frame_of(p, {{0, b, false}}), {}, m), m);
        const auto t1 = carve_train(encode(frame_of(p, {{1, b, false}}), {}, m), m);
        const std::size_t shift = static_cast<std::size_t>(std::llround(default_tau / m.sample_period));
        for (std::size_t i = 0; i + shift < t0.size(); ++i)
            CHECK(std::abs(t0.samples[i] - t1.samples[i + shift]) < 1e-14);
    }
}

TEST_CASE("BB84 X pulses carry half the Z pulse intensity")
{
    const auto m = bin_sampled();
    for (std::uint8_t bit : {0, 1}) {
        const auto z = carve_train(encode(frame_of(Protocol::BB84, {{bit, Basis::Z, false}}), {}, m), m);
        const auto x = carve_train(encode(frame_of(Protocol::BB84, {{bit, Basis::X, false}}), {}, m), m);
        const double iz = std::norm(z.samples[bit]);
        CHECK(std::norm(x.samples[0]) / iz == Approx(0.5).epsilon(1e-12));
        CHECK(std::norm(x.samples[1]) / iz == Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("frame text round trip")
{
    const auto f = random_frame(Protocol::BB84, 50, 0.0, 12);
    std::stringstream ss;
    write_frame(ss, f);
    const auto g = read_frame(ss);
    CHECK(g == f);

    std::istringstream bad("# frame protocol=COW qubit_period=1.6e-09 tau=8e-10 seed=1 symbols=1\nCOW,0,x,none,0\n");
    CHECK_THROWS_AS(read_frame(bad), Error);
    std::istringstream headless("COW,0,0,none,0\n");
    CHECK_THROWS_AS(read_frame(headless), Error);
}
