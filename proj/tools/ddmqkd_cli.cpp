// ddmqkd: batch runner for the DDM QKD simulator.
//
//   ddmqkd mu-sweep --config configs/cow.conf --seed 7 --out cow.csv
//
// Failures print a single line "error:<kind>:<message>" to stderr.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ddmqkd/ddmqkd.hpp"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::uint64_t trials = 0;
};

std::string one_line(std::string s)
{
    for (auto& ch : s)
        if (ch == '\n' || ch == '\r')
            ch = ' ';
    return s;
}

int run(const std::string& command, const Options& opt, bool seed_set, bool trials_set)
{
    using namespace ddmqkd;
    KeyValues kv = opt.config.empty() ? KeyValues{} : KeyValues::load(opt.config);
    if (seed_set)
        kv.set("seed", std::to_string(opt.seed));
    if (trials_set)
        kv.set("trials", std::to_string(opt.trials));
    const auto cfg = bind_config(kv);

    std::ostringstream csv;
    if (command == "mu-sweep")
        write_mu_sweep_csv(csv, run_mu_sweep(cfg), cfg.hash);
    else if (command == "chirp-study")
        write_chirp_csv(csv, run_chirp_study(cfg), cfg.hash);
    else if (command == "freq-sweep")
        write_freq_csv(csv, run_freq_sweep(cfg), cfg.hash);
    else if (command == "stability")
        write_stability_csv(csv, run_stability(cfg), cfg.stability.report_every, cfg.hash);
    else if (command == "extinction")
        write_extinction_csv(csv, run_extinction(cfg), cfg.hash);
    else
        fail(ErrorKind::Config, "unknown command '" + command + "'");

    if (opt.out.empty() || opt.out == "-") {
        std::cout << csv.str();
    } else {
        std::ofstream os(opt.out, std::ios::binary);
        if (!os)
            fail(ErrorKind::Config, "cannot write '" + opt.out + "'");
        os << csv.str();
        if (!os)
            fail(ErrorKind::Config, "write to '" + opt.out + "' failed");
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"DDM QKD transmitter and receiver simulator"};
    app.require_subcommand(1);
    Options opt;
    std::vector<std::pair<std::string, CLI::App*>> subs;
    const std::pair<const char*, const char*> commands[] = {
        {"mu-sweep", "sifted rate, QBER and secret rate versus mean photon number"},
        {"chirp-study", "X-state phase QBER versus drive eye spreading"},
        {"freq-sweep", "interferometer visibility versus sinusoidal clock frequency"},
        {"stability", "long run with drift, with and without the feedback controller"},
        {"extinction", "time-basis QBER versus modulator extinction ratio"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "key-value configuration file");
        sub->add_option("--seed", opt.seed, "master seed (overrides the config)");
        sub->add_option("--out", opt.out, "output CSV path, '-' for stdout");
        sub->add_option("--trials", opt.trials, "trials per sweep point (overrides the config)")
            ->check(CLI::PositiveNumber);
        subs.emplace_back(name, sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error:usage:" << one_line(e.what()) << "\n";
        return 2;
    }

    for (const auto& [name, sub] : subs) {
        if (!sub->parsed())
            continue;
        try {
            return run(name, opt, sub->count("--seed") > 0, sub->count("--trials") > 0);
        } catch (const ddmqkd::Error& e) {
            std::cerr << "error:" << ddmqkd::to_string(e.kind()) << ':' << one_line(e.what()) << "\n";
            return 1;
        } catch (const std::exception& e) {
            std::cerr << "error:internal:" << one_line(e.what()) << "\n";
            return 1;
        }
    }
    return 2;
}
