#pragma once

// Protocol symbol streams and their two-arm DDM drive encodings.
//
// Time bins have period tau; bin k is centred at (k + 1/2) tau. COW and BB84
// use two bins per qubit (early, late), DPS one pulse per bin with the bit
// carried by the phase step between consecutive pulses.
//
//   COW   bit 0 -> early pulse, bit 1 -> late pulse, decoy -> both (push-pull)
//   DPS   pulse k+1 in the same arm as pulse k for bit 0, the other arm for 1
//   BB84  Z as COW; X as two half-intensity pulses, second pulse from the
//         same arm for bit 0 and from the opposite arm for bit 1

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ddmqkd/ddm_core.hpp"
#include "ddmqkd/error.hpp"
#include "ddmqkd/random.hpp"

namespace ddmqkd {

enum class Protocol { COW, DPS, BB84 };
enum class Basis { None, Z, X };

inline const char* to_string(Protocol p)
{
    switch (p) {
    case Protocol::COW: return "COW";
    case Protocol::DPS: return "DPS";
    case Protocol::BB84: return "BB84";
    }
    return "?";
}

inline const char* to_string(Basis b)
{
    switch (b) {
    case Basis::None: return "none";
    case Basis::Z: return "Z";
    case Basis::X: return "X";
    }
    return "?";
}

inline Protocol parse_protocol(const std::string& s)
{
    if (s == "COW" || s == "cow") return Protocol::COW;
    if (s == "DPS" || s == "dps") return Protocol::DPS;
    if (s == "BB84" || s == "bb84") return Protocol::BB84;
    fail(ErrorKind::Config, "unknown protocol '" + s + "'");
}

inline Basis parse_basis(const std::string& s)
{
    if (s == "none" || s == "-") return Basis::None;
    if (s == "Z") return Basis::Z;
    if (s == "X") return Basis::X;
    fail(ErrorKind::Config, "unknown basis '" + s + "'");
}

struct Symbol {
    std::uint8_t bit = 0;
    Basis basis = Basis::None;
    bool decoy = false;

    friend bool operator==(const Symbol&, const Symbol&) = default;
};

inline constexpr double default_tau = 800e-12;

struct SymbolFrame {
    Protocol protocol = Protocol::COW;
    std::vector<Symbol> symbols;
    double qubit_period = 2.0 * default_tau;
    double tau = default_tau;
    std::uint64_t seed = 0;

    std::size_t bins_per_symbol() const { return protocol == Protocol::DPS ? 1 : 2; }

    // DPS needs one reference pulse in front of the first bit.
    std::size_t bins() const
    {
        if (protocol == Protocol::DPS)
            return symbols.empty() ? 0 : symbols.size() + 1;
        return 2 * symbols.size();
    }

    void validate() const
    {
        if (!(tau > 0.0))
            fail(ErrorKind::Encoding, "frame tau must be positive");
        const double expected = protocol == Protocol::DPS ? tau : 2.0 * tau;
        if (std::abs(qubit_period - expected) > 1e-9 * expected)
            fail(ErrorKind::Encoding, std::string("qubit period inconsistent with tau for ") + to_string(protocol));
        for (const auto& s : symbols) {
            if (s.bit > 1)
                fail(ErrorKind::Encoding, "symbol bit must be 0 or 1");
            if (s.decoy && protocol != Protocol::COW)
                fail(ErrorKind::Encoding, "decoy flag is only valid for COW");
            if (protocol == Protocol::BB84) {
                if (s.basis == Basis::None)
                    fail(ErrorKind::Encoding, "BB84 symbols need a Z or X basis");
            } else if (s.basis != Basis::None) {
                fail(ErrorKind::Encoding, std::string(to_string(protocol)) + " symbols carry no basis");
            }
        }
    }

    friend bool operator==(const SymbolFrame&, const SymbolFrame&) = default;
};

inline SymbolFrame random_frame(Protocol protocol, std::size_t n_symbols, double decoy_prob, std::uint64_t seed,
                                double tau = default_tau)
{
    if (!(decoy_prob >= 0.0 && decoy_prob < 1.0))
        fail(ErrorKind::Config, "decoy probability must lie in [0, 1)");
    SymbolFrame f;
    f.protocol = protocol;
    f.tau = tau;
    f.qubit_period = protocol == Protocol::DPS ? tau : 2.0 * tau;
    f.seed = seed;
    f.symbols.resize(n_symbols);
    Rng rng = make_rng(seed, {0xF7A3E});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& s : f.symbols) {
        switch (protocol) {
        case Protocol::COW:
            s.decoy = u(rng) < decoy_prob;
            s.bit = static_cast<std::uint8_t>(rng() >> 63);
            if (s.decoy)
                s.bit = 0;
            break;
        case Protocol::DPS:
            s.bit = static_cast<std::uint8_t>(rng() >> 63);
            break;
        case Protocol::BB84:
            s.basis = (rng() >> 63) ? Basis::X : Basis::Z;
            s.bit = static_cast<std::uint8_t>(rng() >> 63);
            break;
        }
    }
    return f;
}

// Arm carrying each DPS pulse (n_symbols + 1 pulses, first pulse in arm 1).
inline std::vector<int> dps_pulse_arms(const SymbolFrame& frame)
{
    std::vector<int> arms;
    if (frame.symbols.empty())
        return arms;
    arms.reserve(frame.symbols.size() + 1);
    arms.push_back(1);
    for (const auto& s : frame.symbols)
        arms.push_back(s.bit ? 3 - arms.back() : arms.back());
    return arms;
}

enum class NoiseDistribution { Uniform, Gaussian };

struct NoiseModel {
    // Full-width pulse amplitude scatter of a two-level drive, as a fraction
    // of the two-level swing.
    double base_eye_spread = 0.0;
    std::map<int, double> level_penalty{{2, 1.0}, {3, 1.5}, {4, 3.0}};
    NoiseDistribution distribution = NoiseDistribution::Uniform;
    std::uint64_t seed = 0;
    // Static drive amplitude mismatch: arm 1 scaled by (1 + m/2), arm 2 by (1 - m/2).
    double arm_mismatch = 0.0;

    void validate() const
    {
        if (!(base_eye_spread >= 0.0))
            fail(ErrorKind::Config, "eye spread must be non-negative");
        if (!(std::abs(arm_mismatch) < 2.0))
            fail(ErrorKind::Config, "arm mismatch must lie in (-2, 2)");
        double prev = 0.0;
        for (const auto& [levels, penalty] : level_penalty) {
            if (!(penalty >= prev))
                fail(ErrorKind::Config, "level penalties must be non-decreasing in level count");
            prev = penalty;
        }
    }

    double penalty(int levels) const
    {
        const auto it = level_penalty.find(levels);
        if (it == level_penalty.end())
            fail(ErrorKind::Config, "no eye-spread penalty for a " + std::to_string(levels) + "-level drive");
        return it->second;
    }

    bool is_identity() const { return base_eye_spread == 0.0 && arm_mismatch == 0.0; }
};

struct EncoderOptions {
    PulseShape shape;
    // COW pulses from a single arm driven to V_pi instead of push-pull.
    bool cow_single_arm = false;
    // BB84 phase states by push-pull (four-level arms) instead of single-arm pulses.
    bool bb84_push_pull = false;
};

inline std::vector<double> sorted_levels(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline DriveWaveform apply_eye_noise(const DriveWaveform& drive, const NoiseModel& noise)
{
    noise.validate();
    DriveWaveform out = drive;
    if (noise.is_identity())
        return out;

    std::map<int, double> width;
    for (int arm : {1, 2}) {
        bool used = false;
        for (const auto& p : drive.pulses)
            used = used || p.arm == arm;
        if (!used)
            continue;
        double swing = 0.0;
        for (double l : drive.level_set(arm))
            swing = std::max(swing, std::abs(l));
        width[arm] = noise.base_eye_spread * noise.penalty(drive.level_count(arm)) * swing;
    }

    Rng rng = make_rng(noise.seed, {0xE7E});
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(12.0));
    for (auto& p : out.pulses) {
        const double scale = p.arm == 1 ? 1.0 + noise.arm_mismatch / 2.0 : 1.0 - noise.arm_mismatch / 2.0;
        const double w = width[p.arm];
        const double draw = noise.distribution == NoiseDistribution::Uniform ? uni(rng) : gauss(rng);
        p.level = p.level * scale + w * draw;
    }
    out.eye_spread = noise.base_eye_spread;
    out.render(drive.size());
    return out;
}

inline DriveWaveform encode(const SymbolFrame& frame, const NoiseModel& noise, const ModulatorConfig& cfg,
                            const EncoderOptions& opts = {})
{
    frame.validate();
    cfg.validate();
    const double tau = frame.tau;
    const double half = pi / 2.0;
    const double quarter = pi / 4.0;

    DriveWaveform w;
    w.sample_period = cfg.sample_period;
    w.t0 = std::fmod(tau / 2.0, cfg.sample_period);
    w.shape = opts.shape;

    auto center = [tau](std::size_t bin) { return (static_cast<double>(bin) + 0.5) * tau; };
    auto push_pull = [&](std::size_t bin, double amp) {
        w.pulses.push_back({1, center(bin), amp});
        w.pulses.push_back({2, center(bin), -amp});
    };

    switch (frame.protocol) {
    case Protocol::COW:
        if (opts.cow_single_arm) {
            w.level_set_arm1 = {0.0, pi};
            w.level_set_arm2 = {0.0};
        } else {
            w.level_set_arm1 = {0.0, half};
            w.level_set_arm2 = {-half, 0.0};
        }
        for (std::size_t k = 0; k < frame.symbols.size(); ++k) {
            const auto& s = frame.symbols[k];
            for (std::size_t j = 0; j < 2; ++j) {
                if (!(s.decoy || s.bit == j))
                    continue;
                if (opts.cow_single_arm)
                    w.pulses.push_back({1, center(2 * k + j), pi});
                else
                    push_pull(2 * k + j, half);
            }
        }
        break;
    case Protocol::DPS: {
        w.level_set_arm1 = {0.0, pi};
        w.level_set_arm2 = {0.0, pi};
        const auto arms = dps_pulse_arms(frame);
        for (std::size_t k = 0; k < arms.size(); ++k)
            w.pulses.push_back({arms[k], center(k), pi});
        break;
    }
    case Protocol::BB84:
        if (opts.bb84_push_pull) {
            w.level_set_arm1 = sorted_levels({-quarter, 0.0, quarter, half});
            w.level_set_arm2 = sorted_levels({-half, -quarter, 0.0, quarter});
        } else {
            w.level_set_arm1 = {0.0, half};
            w.level_set_arm2 = {-half, 0.0, half};
        }
        for (std::size_t k = 0; k < frame.symbols.size(); ++k) {
            const auto& s = frame.symbols[k];
            if (s.basis == Basis::Z) {
                push_pull(2 * k + s.bit, half);
            } else if (opts.bb84_push_pull) {
                push_pull(2 * k, quarter);
                push_pull(2 * k + 1, s.bit ? -quarter : quarter);
            } else {
                w.pulses.push_back({1, center(2 * k), half});
                w.pulses.push_back({s.bit ? 2 : 1, center(2 * k + 1), half});
            }
        }
        break;
    }

    const double span = static_cast<double>(frame.bins()) * tau - w.t0;
    const auto n = frame.bins() == 0 ? 0 : static_cast<std::size_t>(std::ceil(span / cfg.sample_period - 1e-9));
    w.render(n);
    return noise.is_identity() ? w : apply_eye_noise(w, noise);
}

// Line format: "<PROTOCOL>,<index>,<bit>,<basis>,<decoy>" preceded by one
// "# frame" header line carrying the timing and seed.
inline void write_frame(std::ostream& os, const SymbolFrame& frame)
{
    os.precision(17);
    os << "# frame protocol=" << to_string(frame.protocol) << " qubit_period=" << frame.qubit_period
       << " tau=" << frame.tau << " seed=" << frame.seed << " symbols=" << frame.symbols.size() << "\n";
    for (std::size_t i = 0; i < frame.symbols.size(); ++i) {
        const auto& s = frame.symbols[i];
        os << to_string(frame.protocol) << ',' << i << ',' << int(s.bit) << ',' << to_string(s.basis) << ','
           << (s.decoy ? 1 : 0) << '\n';
    }
}

inline std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        out.push_back(cur);
    if (!s.empty() && s.back() == sep)
        out.emplace_back();
    return out;
}

inline SymbolFrame read_frame_unchecked(std::istream& is)
{
    SymbolFrame f;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        if (line.rfind("# frame", 0) == 0) {
            std::istringstream hs(line.substr(7));
            std::string kv;
            while (hs >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos)
                    continue;
                const std::string key = kv.substr(0, eq);
                const std::string val = kv.substr(eq + 1);
                if (key == "protocol") f.protocol = parse_protocol(val);
                else if (key == "qubit_period") f.qubit_period = std::stod(val);
                else if (key == "tau") f.tau = std::stod(val);
                else if (key == "seed") f.seed = std::stoull(val);
            }
            header = true;
            continue;
        }
        if (line[0] == '#')
            continue;
        const auto fields = split(line, ',');
        if (fields.size() != 5)
            fail(ErrorKind::Config, "malformed frame line: " + line);
        if (parse_protocol(fields[0]) != f.protocol)
            fail(ErrorKind::Config, "frame line protocol differs from header");
        if (std::stoull(fields[1]) != f.symbols.size())
            fail(ErrorKind::Config, "frame line index out of sequence");
        Symbol s;
        s.bit = static_cast<std::uint8_t>(std::stoi(fields[2]));
        s.basis = parse_basis(fields[3]);
        s.decoy = fields[4] == "1";
        f.symbols.push_back(s);
    }
    if (!header)
        fail(ErrorKind::Config, "frame stream lacks a '# frame' header");
    f.validate();
    return f;
}

inline SymbolFrame read_frame(std::istream& is)
{
    try {
        return read_frame_unchecked(is);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorKind::Config, std::string("malformed frame stream: ") + e.what());
    }
}

} // namespace ddmqkd
