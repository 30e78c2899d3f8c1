#include <catch_amalgamated.hpp>

#include <sstream>

#include "ddmqkd/experiments.hpp"

using namespace ddmqkd;
using Catch::Approx;

namespace {

std::string header_of(const std::string& csv) { return csv.substr(0, csv.find('\n')); }

ExperimentConfig small(const std::string& extra = "")
{
    auto kv = KeyValues::parse_string("duration = 0.02\nframe_symbols = 512\nmu_sweep.mu_list = 0.1, 0.001\n");
    const auto over = KeyValues::parse_string(extra);
    for (const auto& [k, v] : over.values())
        kv.set(k, v);
    return bind_config(kv);
}

} // namespace

TEST_CASE("key-value parsing")
{
    const auto kv = KeyValues::parse_string("# top\n a = 1 # trailing\n\nb=two words\n");
    CHECK(*kv.find("a") == "1");
    CHECK(*kv.find("b") == "two words");
    CHECK_THROWS_AS(KeyValues::parse_string("a = 1\na = 2\n"), Error);
    CHECK_THROWS_AS(KeyValues::parse_string("just text\n"), Error);
    CHECK_THROWS_AS(KeyValues::load("/nonexistent/x.conf"), Error);
}

TEST_CASE("config binding validates keys and values")
{
    CHECK_THROWS_AS(bind_config(KeyValues::parse_string("detector.efficency = 0.2\n")), Error);
    CHECK_THROWS_AS(bind_config(KeyValues::parse_string("detector.efficiency = fast\n")), Error);
    CHECK_THROWS_AS(bind_config(KeyValues::parse_string("trials = 0\n")), Error);
    CHECK_THROWS_AS(bind_config(KeyValues::parse_string("trials = -3\n")), Error);
    CHECK_THROWS_AS(bind_config(KeyValues::parse_string("protocol = SARG\n")), Error);
    CHECK_THROWS_AS(bind_config(KeyValues::parse_string("mu_sweep.mu_list = 1, 0\n")), Error);
    CHECK_THROWS_AS(bind_config(KeyValues::parse_string("receiver.visibility = 1.2\n")), Error);
    try {
        bind_config(KeyValues::parse_string("bogus = 1\n"));
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
    const auto c = bind_config(KeyValues::parse_string("protocol = bb84\nmodulator.extinction_db = 27\n"));
    CHECK(c.protocol == Protocol::BB84);
    CHECK(c.receiver.protocol == Protocol::BB84);
    CHECK(c.modulator.extinction_db == 27.0);
    CHECK_FALSE(c.keyrate_model().finite_key);
    CHECK(default_config().keyrate_model().finite_key);
}

TEST_CASE("config hash covers effective values only")
{
    const auto a = bind_config(KeyValues::parse_string("seed = 3\nprotocol = DPS\n"));
    const auto b = bind_config(KeyValues::parse_string("# same run\nprotocol = DPS\nseed = 3\ntrials = 1\n"));
    const auto c = bind_config(KeyValues::parse_string("seed = 4\nprotocol = DPS\n"));
    CHECK(a.hash == b.hash);
    CHECK(a.hash != c.hash);
    CHECK(a.hash.size() == 16);
}

TEST_CASE("mu sweep CSV schema and determinism")
{
    const auto c = small();
    std::ostringstream a, b;
    write_mu_sweep_csv(a, run_mu_sweep(c), c.hash);
    write_mu_sweep_csv(b, run_mu_sweep(c), c.hash);
    CHECK(header_of(a.str()) ==
          "mu,sifted_rate_bps,qber_time,qber_time_ci,qber_phase,qber_phase_ci,visibility,secret_rate_bps,config_hash");
    CHECK(a.str() == b.str());
    std::istringstream rows(a.str());
    std::string line;
    std::getline(rows, line);
    int n = 0;
    while (std::getline(rows, line)) {
        ++n;
        CHECK(line.substr(line.rfind(',') + 1) == c.hash);
    }
    CHECK(n == 2);

    const auto other = small("seed = 99\n");
    std::ostringstream d;
    write_mu_sweep_csv(d, run_mu_sweep(other), other.hash);
    CHECK(d.str() != a.str());
}

TEST_CASE("trials pool deterministically")
{
    auto c = small("trials = 3\n");
    const auto x = run_link(c, 0.01, 5);
    const auto y = run_link(c, 0.01, 5);
    CHECK(x.sifted_count == y.sifted_count);
    CHECK(x.time.errors == y.time.errors);
    CHECK(x.duration == Approx(3 * c.duration));
}

TEST_CASE("secret rate vanishes before the sifted rate with loss")
{
    auto c = small("duration = 0.2\n");
    double prev_secret = 1e300;
    bool secret_gone = false;
    for (double loss : {0.0, 10.0, 20.0, 30.0, 40.0}) {
        c.channel.extra_loss_db = loss;
        const auto st = run_link(c, std::pow(10.0, -loss / 10.0) * 0.1, 4);
        const double r = secret_rate(st, c.keyrate_model());
        CHECK(r <= prev_secret);
        prev_secret = r;
        if (r == 0.0)
            secret_gone = true;
        CHECK(st.sifted_rate > 0.0);
    }
    CHECK(secret_gone);
}

TEST_CASE("frequency sweep peaks at the inverse delay")
{
    auto c = small("freq.min = 1.2e9\nfreq.max = 1.3e9\nfreq.step = 1e7\n");
    const auto rows = run_freq_sweep(c);
    CHECK(rows.size() == 11);
    const auto best = std::max_element(rows.begin(), rows.end(),
                                       [](const auto& a, const auto& b) { return a.visibility < b.visibility; });
    CHECK(best->frequency == Approx(1.25e9));
    CHECK(best->visibility == Approx(c.receiver.interferometer_visibility).epsilon(1e-9));
    CHECK(freq_point(c, 2.5e9).overlap == Approx(1.0).epsilon(1e-9));
    CHECK(freq_point(c, 2.5e9).overlap > freq_point(c, 2.0e9).overlap);
    std::ostringstream os;
    write_freq_csv(os, rows, c.hash);
    CHECK(header_of(os.str()) == "clock_freq_hz,overlap_visibility,visibility,qber_phase,config_hash");
}

TEST_CASE("chirp study without noise has no phase errors")
{
    auto c = small("chirp.eye_spreads = 0\nchirp.symbols = 2000\n");
    const auto rows = run_chirp_study(c);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].scheme == "chirped");
    CHECK(rows[0].levels_arm2 == 3);
    CHECK(rows[1].levels_arm1 == 4);
    for (const auto& r : rows)
        CHECK(r.mean() == Approx(0.0).margin(1e-12));
}

TEST_CASE("stability: zero drift keeps settings near optimum")
{
    auto c = small("stability.hours = 4\nstability.controller = nodrift\n");
    const auto runs = run_stability(c);
    REQUIRE(runs.size() == 1);
    for (const auto& s : runs[0].samples) {
        CHECK(std::abs(s.bias_error) <= c.stability.dither + 1e-12);
        CHECK(std::abs(s.phase_error) <= c.stability.dither + 1e-12);
    }
    std::ostringstream os;
    write_stability_csv(os, runs, c.stability.report_every, c.hash);
    CHECK(header_of(os.str()).rfind("mode,t_hours,qber_time,qber_phase", 0) == 0);
}

TEST_CASE("extinction experiment reports the optical QBER")
{
    auto c = small("extinction.db_list = 27\nextinction.qubits = 20000\nextinction.duration = 0.002\n");
    const auto rows = run_extinction(c);
    REQUIRE(rows.size() == 1);
    const double er = std::pow(10.0, -2.7);
    CHECK(rows[0].optical_qber == Approx(er / (1 + er)).epsilon(1e-9));
    CHECK(rows[0].mc_count > 0);
}
