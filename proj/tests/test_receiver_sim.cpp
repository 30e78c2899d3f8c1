#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "ddmqkd/receiver_sim.hpp"

using namespace ddmqkd;
using Catch::Approx;

namespace {

ReceiverConfig lossless(double v = 1.0)
{
    ReceiverConfig rx;
    rx.interferometer_visibility = v;
    rx.interferometer_loss_db = 0.0;
    rx.circulator_loss_db = 0.0;
    return rx;
}

FieldTrain bins(std::vector<cplx> s)
{
    FieldTrain t;
    t.sample_period = default_tau;
    t.samples = std::move(s);
    return t;
}

ModulatorConfig bin_sampled()
{
    ModulatorConfig m;
    m.sample_period = default_tau;
    return m;
}

DetectorConfig quiet()
{
    DetectorConfig d;
    d.dark_rate = 0.0;
    d.afterpulse_prob = 0.0;
    d.dead_time = 0.0;
    return d;
}

} // namespace

TEST_CASE("interference of two pulses")
{
    const cplx a{0.0, 1.0};
    auto same = interfere(bins({a, a}), lossless());
    CHECK(same.port0[1] == Approx(1.0));
    CHECK(same.port1[1] == Approx(0.0).margin(1e-15));
    auto opposite = interfere(bins({a, -a}), lossless());
    CHECK(opposite.port0[1] == Approx(0.0).margin(1e-15));
    CHECK(opposite.port1[1] == Approx(1.0));
    auto real = interfere(bins({a, a}), lossless(0.9976));
    CHECK(real.port1[1] / (real.port0[1] + real.port1[1]) == Approx(0.0012).epsilon(1e-9));
}

TEST_CASE("interferometer conserves energy up to the configured loss")
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<cplx> s(257);
    for (auto& x : s)
        x = {u(rng), u(rng)};
    FieldTrain t;
    t.sample_period = 10e-12;
    t.samples = s;
    t.alpha_ref = 3.0;
    ReceiverConfig rx;
    rx.interferometer_visibility = 0.93;
    for (bool cyclic : {false, true}) {
        const auto p = interfere(t, rx, cyclic);
        double out = 0.0;
        for (std::size_t j = 0; j < p.port0.size(); ++j)
            out += p.port0[j] + p.port1[j];
        double in = 0.0;
        for (const auto& x : s)
            in += std::norm(x);
        CHECK(out == Approx(3.0 * in * std::pow(10.0, -0.3)).epsilon(1e-9));
    }
}

TEST_CASE("interference errors")
{
    auto t = bins({{1.0, 0.0}});
    ReceiverConfig rx;
    rx.interferometer_delay = 2 * default_tau;
    CHECK_THROWS_AS(interfere(t, rx), Error);
    try {
        interfere(t, rx);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Measurement);
    }
    ReceiverConfig bad;
    bad.interferometer_visibility = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = {};
    bad.monitor_coupler_ratio = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("ideal phase states never reach the wrong port")
{
    const auto m = bin_sampled();
    const auto dps = random_frame(Protocol::DPS, 400, 0.0, 1);
    const auto td = carve_train(encode(dps, {}, m), m);
    const auto pd = interfere(td, lossless(), true);
    for (std::size_t k = 0; k < dps.symbols.size(); ++k)
        CHECK((dps.symbols[k].bit ? pd.port0[k + 1] : pd.port1[k + 1]) == 0.0);

    const auto bb = random_frame(Protocol::BB84, 400, 0.0, 2);
    const auto tb = carve_train(encode(bb, {}, m), m);
    const auto pb = interfere(tb, lossless(), true);
    for (std::size_t k = 0; k < bb.symbols.size(); ++k) {
        if (bb.symbols[k].basis != Basis::X)
            continue;
        CHECK((bb.symbols[k].bit ? pb.port0[2 * k + 1] : pb.port1[2 * k + 1]) < 1e-30);
    }
}

TEST_CASE("delayed overlap visibility is one at the matched period")
{
    const auto t = carve_train(sine_drive(1.25e9, pi / 2.0, 20000, 10e-12), {});
    CHECK(delayed_overlap_visibility(t, default_tau) == Approx(1.0).epsilon(1e-9));
    const auto off = carve_train(sine_drive(1.0e9, pi / 2.0, 20000, 10e-12), {});
    CHECK(delayed_overlap_visibility(off, default_tau) < 0.999);
}

TEST_CASE("receiver optics per protocol")
{
    const auto t = bins({{0.0, 1.0}, {0.0, 1.0}});
    ReceiverConfig rx;
    rx.protocol = Protocol::COW;
    const auto cow = receiver_optics(t, rx);
    REQUIRE(cow.size() == 3);
    CHECK(cow[0].id == DetectorId::D);
    CHECK(cow[0].mean_photons[0] == Approx(0.9));
    CHECK(cow[1].id == DetectorId::M);
    CHECK(cow[2].id == DetectorId::MDark);
    rx.protocol = Protocol::DPS;
    const auto dps = receiver_optics(t, rx);
    CHECK(dps.size() == 2);
    CHECK(dps[0].id == DetectorId::Port0);
    rx.protocol = Protocol::BB84;
    const auto bb = receiver_optics(t, rx);
    REQUIRE(bb.size() == 3);
    CHECK(bb[0].id == DetectorId::Z);
    CHECK(bb[0].mean_photons[0] == Approx(0.5));
}

TEST_CASE("detector: no light and no dark counts gives no events")
{
    DetectorInput in{DetectorId::D, std::vector<double>(100, 0.0)};
    CHECK(detect(in, quiet(), default_tau, 1e-3, 1).empty());
}

TEST_CASE("detector click statistics follow 1 - exp(-mu eta)")
{
    DetectorInput in{DetectorId::D, std::vector<double>(1000, 0.01 / 0.2)};
    const double duration = 1e6 * default_tau;
    const auto ev = detect(in, quiet(), default_tau, duration, 7);
    const double p = -std::expm1(-0.01);
    CHECK(std::abs(static_cast<double>(ev.size()) - 1e6 * p) < 300.0);

    // Mixed per-bin probabilities against 4 sigma binomial bounds.
    std::vector<double> mus;
    for (int i = 0; i < 50; ++i)
        mus.push_back(i % 5 == 0 ? 0.0 : 0.02 * (i % 7 + 1));
    DetectorInput mixed{DetectorId::D, mus};
    auto d = quiet();
    d.jitter_fwhm = 0.0;
    const auto ev2 = detect(mixed, d, default_tau, 2e5 * default_tau, 9);
    std::vector<double> hits(mus.size(), 0.0);
    for (const auto& e : ev2)
        hits[static_cast<std::size_t>(e.time / default_tau) % mus.size()] += 1.0;
    const double n_per_bin = 2e5 / mus.size();
    for (std::size_t k = 0; k < mus.size(); ++k) {
        const double q = -std::expm1(-0.2 * mus[k]);
        const double sd = std::sqrt(n_per_bin * q * (1 - q));
        CHECK(std::abs(hits[k] - n_per_bin * q) <= 4.0 * sd + 1e-9);
    }
}

TEST_CASE("detector saturates at the inverse dead time")
{
    DetectorInput in{DetectorId::D, std::vector<double>(8, 1000.0)};
    DetectorConfig d = quiet();
    d.dead_time = 20e-6;
    const double duration = 0.5;
    const auto ev = detect(in, d, default_tau, duration, 3);
    CHECK(ev.size() / duration == Approx(50000.0).epsilon(0.01));
}

TEST_CASE("dead time and ordering hold for every stream")
{
    DetectorConfig d;
    d.afterpulse_prob = 0.2;
    d.dark_rate = 20000.0;
    for (double mu : {0.0, 0.05, 5.0}) {
        DetectorInput in{DetectorId::X1, std::vector<double>(64, mu)};
        const auto ev = detect(in, d, default_tau, 0.05, 11);
        for (std::size_t i = 1; i < ev.size(); ++i) {
            CHECK(ev[i].time > ev[i - 1].time);
            CHECK(ev[i].time - ev[i - 1].time >= d.dead_time * (1 - 1e-12));
        }
        if (mu == 0.0)
            for (const auto& e : ev)
                CHECK(e.origin != Origin::Signal);
    }
}

TEST_CASE("dark counts alone follow the dark rate")
{
    DetectorConfig d = quiet();
    d.dark_rate = 1500.0;
    DetectorInput in{DetectorId::Z, std::vector<double>(4, 0.0)};
    const auto ev = detect(in, d, default_tau, 10.0, 2);
    CHECK(std::abs(static_cast<double>(ev.size()) - 15000.0) < 4.0 * std::sqrt(15000.0));
}

TEST_CASE("bin assignment")
{
    std::vector<DetectionEvent> ev{{(3 + 0.5) * default_tau, DetectorId::D, Origin::Signal, std::nullopt}};
    assign_bins(ev, BinGrid{default_tau / 2, default_tau, 10});
    REQUIRE(ev[0].assigned_bin);
    CHECK(*ev[0].assigned_bin == 3);

    // Only qubit-central bins on a 2 tau grid: 3 FWHM off a centre is outside +-tau/2.
    std::vector<DetectionEvent> off{{1.5 * default_tau + 3 * 250e-12, DetectorId::X0, Origin::Signal, std::nullopt}};
    assign_bins(off, BinGrid{1.5 * default_tau, 2 * default_tau, 10}, default_tau / 2);
    CHECK_FALSE(off[0].assigned_bin);

    std::vector<DetectionEvent> late{{10.2 * default_tau, DetectorId::D, Origin::Signal, std::nullopt}};
    assign_bins(late, BinGrid{default_tau / 2, default_tau, 10});
    CHECK_FALSE(late[0].assigned_bin);
}

TEST_CASE("jitter rarely moves a click into the wrong bin")
{
    DetectorInput in{DetectorId::D, {1.0, 0.0}};
    auto d = quiet();
    const double duration = 400000 * default_tau;
    auto ev = detect(in, d, default_tau, duration, 5);
    assign_bins(ev, BinGrid{default_tau / 2, default_tau, 400000});
    std::size_t wrong = 0;
    for (const auto& e : ev)
        wrong += !e.assigned_bin || *e.assigned_bin % 2 != 0;
    REQUIRE(ev.size() > 10000);
    CHECK(static_cast<double>(wrong) / ev.size() < 0.003);
}

TEST_CASE("event log round trip")
{
    DetectorConfig d;
    d.dark_rate = 1e5;
    DetectorInput in{DetectorId::M, std::vector<double>(10, 0.1)};
    auto ev = detect(in, d, default_tau, 1e-3, 8);
    assign_bins(ev, BinGrid{default_tau / 2, default_tau, 1250000});
    std::stringstream ss;
    write_events(ss, ev);
    CHECK(read_events(ss) == ev);
    std::istringstream bad("SPD_Q,0,1e-9,signal,-\n");
    CHECK_THROWS_AS(read_events(bad), Error);
}
