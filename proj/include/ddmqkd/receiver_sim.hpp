#pragma once

// Receiver optics and single-photon detector Monte Carlo for the COW, DPS and
// BB84 receivers: time-of-arrival detector, unbalanced interferometer with two
// output ports, and passive basis choice.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ddmqkd/ddm_core.hpp"
#include "ddmqkd/error.hpp"
#include "ddmqkd/link_channel.hpp"
#include "ddmqkd/random.hpp"
#include "ddmqkd/waveform_codec.hpp"

namespace ddmqkd {

enum class DetectorId { D, M, MDark, Port0, Port1, Z, X0, X1 };
enum class Origin { Signal, Dark, Afterpulse };

inline const char* to_string(DetectorId id)
{
    switch (id) {
    case DetectorId::D: return "SPD_D";
    case DetectorId::M: return "SPD_M";
    case DetectorId::MDark: return "SPD_M_DARK";
    case DetectorId::Port0: return "SPD_0";
    case DetectorId::Port1: return "SPD_1";
    case DetectorId::Z: return "SPD_Z";
    case DetectorId::X0: return "SPD_X0";
    case DetectorId::X1: return "SPD_X1";
    }
    return "?";
}

inline DetectorId parse_detector(const std::string& s)
{
    for (auto id : {DetectorId::D, DetectorId::M, DetectorId::MDark, DetectorId::Port0, DetectorId::Port1,
                    DetectorId::Z, DetectorId::X0, DetectorId::X1})
        if (s == to_string(id))
            return id;
    fail(ErrorKind::Config, "unknown detector '" + s + "'");
}

inline const char* to_string(Origin o)
{
    switch (o) {
    case Origin::Signal: return "signal";
    case Origin::Dark: return "dark";
    case Origin::Afterpulse: return "afterpulse";
    }
    return "?";
}

inline Origin parse_origin(const std::string& s)
{
    if (s == "signal") return Origin::Signal;
    if (s == "dark") return Origin::Dark;
    if (s == "afterpulse") return Origin::Afterpulse;
    fail(ErrorKind::Config, "unknown event origin '" + s + "'");
}

struct ReceiverConfig {
    Protocol protocol = Protocol::COW;
    double interferometer_delay = default_tau;
    double interferometer_visibility = 0.9976;
    double interferometer_loss_db = 2.0;
    double circulator_loss_db = 1.0;
    double monitor_coupler_ratio = 0.1; // COW fraction tapped to the monitor line
    double basis_coupler_ratio = 0.5;   // BB84 fraction sent to the X line

    void validate() const
    {
        if (!(interferometer_delay > 0.0))
            fail(ErrorKind::Config, "interferometer delay must be positive");
        if (!(interferometer_visibility >= 0.0 && interferometer_visibility <= 1.0))
            fail(ErrorKind::Config, "visibility must lie in [0, 1]");
        if (!(interferometer_loss_db >= 0.0 && circulator_loss_db >= 0.0))
            fail(ErrorKind::Config, "receiver losses must be non-negative");
        if (!(monitor_coupler_ratio > 0.0 && monitor_coupler_ratio < 1.0) ||
            !(basis_coupler_ratio > 0.0 && basis_coupler_ratio < 1.0))
            fail(ErrorKind::Config, "coupler ratios must lie in (0, 1)");
    }

    double phase_line_loss_db() const { return interferometer_loss_db + circulator_loss_db; }
};

struct DetectorConfig {
    double efficiency = 0.20;
    double dark_rate = 1500.0;       // Hz
    double dead_time = 20e-6;        // s
    double jitter_fwhm = 250e-12;    // s
    double afterpulse_prob = 0.01;
    double afterpulse_delay_mean = 1e-6; // s, exponential

    void validate() const
    {
        if (!(efficiency >= 0.0 && efficiency <= 1.0))
            fail(ErrorKind::Config, "detector efficiency must lie in [0, 1]");
        if (!(dark_rate >= 0.0 && dead_time >= 0.0 && jitter_fwhm >= 0.0 && afterpulse_delay_mean >= 0.0))
            fail(ErrorKind::Config, "detector parameters must be non-negative");
        if (!(afterpulse_prob >= 0.0 && afterpulse_prob <= 1.0))
            fail(ErrorKind::Config, "afterpulse probability must lie in [0, 1]");
    }

    double jitter_sigma() const { return jitter_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }
};

struct DetectionEvent {
    double time = 0.0;
    DetectorId detector = DetectorId::D;
    Origin origin = Origin::Signal;
    std::optional<std::int64_t> assigned_bin;

    friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

struct PortIntensities {
    std::vector<double> port0; // constructive for equal phases
    std::vector<double> port1;
};

// Unbalanced interferometer: output j combines the short-arm field E_j with
// the long-arm field E_{j-d}. Intensities are in photons (alpha_ref units).
// Acyclic trains produce n + d outputs so total energy is conserved; cyclic
// trains wrap the delayed copy around and keep n outputs.
inline PortIntensities interfere(const FieldTrain& train, const ReceiverConfig& rx, bool cyclic = false)
{
    rx.validate();
    const double d_exact = rx.interferometer_delay / train.sample_period;
    const double d_round = std::round(d_exact);
    const bool integral = std::abs(d_exact - d_round) < 1e-6;
    const auto n = train.size();
    if (d_exact > static_cast<double>(n))
        fail(ErrorKind::Measurement, "interferometer delay exceeds the train length");
    if (cyclic && !integral)
        fail(ErrorKind::Measurement, "cyclic interference needs a delay of whole samples");

    const auto d_int = static_cast<std::size_t>(std::floor(d_exact + (integral ? 0.5 : 0.0)));
    const double frac = integral ? 0.0 : d_exact - std::floor(d_exact);
    const std::size_t n_out = cyclic ? n : n + d_int + (frac > 0.0 ? 1 : 0);

    auto at = [&](std::ptrdiff_t i) -> cplx {
        if (cyclic) {
            const auto m = static_cast<std::ptrdiff_t>(n);
            return train.samples[static_cast<std::size_t>(((i % m) + m) % m)];
        }
        if (i < 0 || i >= static_cast<std::ptrdiff_t>(n))
            return {0.0, 0.0};
        return train.samples[static_cast<std::size_t>(i)];
    };
    auto delayed = [&](std::size_t j) -> cplx {
        const auto base = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(d_int);
        if (frac == 0.0)
            return at(base);
        return (1.0 - frac) * at(base) + frac * at(base - 1);
    };

    const double scale = train.alpha_ref * std::pow(10.0, -rx.phase_line_loss_db() / 10.0) / 4.0;
    const double v = rx.interferometer_visibility;
    PortIntensities out;
    out.port0.resize(n_out);
    out.port1.resize(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
        const cplx a = at(static_cast<std::ptrdiff_t>(j));
        const cplx b = delayed(j);
        const double sum = std::norm(a) + std::norm(b);
        const double cross = 2.0 * v * (a * std::conj(b)).real();
        out.port0[j] = scale * std::max(0.0, sum + cross);
        out.port1[j] = scale * std::max(0.0, sum - cross);
    }
    return out;
}

// Interference contrast of a train with its delayed copy,
// (I_max - I_min) / (I_max + I_min) over a scan of the interferometer phase.
inline double delayed_overlap_visibility(const FieldTrain& train, double delay)
{
    const double d_exact = delay / train.sample_period;
    const auto d_int = static_cast<std::size_t>(std::floor(d_exact));
    const double frac = d_exact - std::floor(d_exact);
    if (d_int + 1 >= train.size())
        fail(ErrorKind::Measurement, "delay exceeds the train length");
    cplx cross{0.0, 0.0};
    double pa = 0.0;
    double pb = 0.0;
    for (std::size_t j = d_int + 1; j < train.size(); ++j) {
        const cplx a = train.samples[j];
        const cplx b = (1.0 - frac) * train.samples[j - d_int] + frac * train.samples[j - d_int - 1];
        cross += a * std::conj(b);
        pa += std::norm(a);
        pb += std::norm(b);
    }
    if (pa + pb == 0.0)
        return 0.0;
    return 2.0 * std::abs(cross) / (pa + pb);
}

struct DetectorInput {
    DetectorId id = DetectorId::D;
    std::vector<double> mean_photons; // per bin, one frame cycle
};

// Splits a bin-sampled train (one sample per time bin, photons via alpha_ref)
// into the mean photon numbers reaching each detector of the receiver.
inline std::vector<DetectorInput> receiver_optics(const FieldTrain& bins, const ReceiverConfig& rx)
{
    rx.validate();
    std::vector<DetectorInput> out;
    auto direct = [&](DetectorId id, double fraction) {
        DetectorInput in{id, {}};
        in.mean_photons.reserve(bins.size());
        for (const auto& s : bins.samples)
            in.mean_photons.push_back(fraction * bins.alpha_ref * std::norm(s));
        out.push_back(std::move(in));
    };
    auto phase_line = [&](DetectorId constructive, DetectorId destructive, double fraction) {
        auto ports = interfere(with_photon_scale(bins, fraction), rx, true);
        out.push_back({constructive, std::move(ports.port0)});
        out.push_back({destructive, std::move(ports.port1)});
    };
    switch (rx.protocol) {
    case Protocol::COW:
        direct(DetectorId::D, 1.0 - rx.monitor_coupler_ratio);
        phase_line(DetectorId::M, DetectorId::MDark, rx.monitor_coupler_ratio);
        break;
    case Protocol::DPS:
        phase_line(DetectorId::Port0, DetectorId::Port1, 1.0);
        break;
    case Protocol::BB84:
        direct(DetectorId::Z, 1.0 - rx.basis_coupler_ratio);
        phase_line(DetectorId::X0, DetectorId::X1, rx.basis_coupler_ratio);
        break;
    }
    return out;
}

// Free-running detector driven by per-bin mean photon numbers that repeat
// cyclically over `duration`. Photon clicks are drawn by thinning a geometric
// candidate stream, so cost scales with the number of candidates rather than
// the number of bins. Dead time is measured on recorded (jittered) times.
inline std::vector<DetectionEvent> detect(const DetectorInput& input, const DetectorConfig& det, double bin_period,
                                          double duration, std::uint64_t seed)
{
    det.validate();
    if (!(bin_period > 0.0))
        fail(ErrorKind::Config, "bin period must be positive");
    std::vector<DetectionEvent> events;
    if (!(duration > 0.0))
        return events;

    const auto n = input.mean_photons.size();
    const std::uint64_t total_bins = n == 0 ? 0 : static_cast<std::uint64_t>(std::floor(duration / bin_period + 1e-9));
    std::vector<double> p(n);
    double p_max = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        p[k] = -std::expm1(-det.efficiency * std::max(0.0, input.mean_photons[k]));
        p_max = std::max(p_max, p[k]);
    }

    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(input.id) + 1});
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sigma = det.jitter_sigma();
    const double inf = std::numeric_limits<double>::infinity();

    auto center = [&](std::uint64_t bin) { return (static_cast<double>(bin) + 0.5) * bin_period; };
    auto exp_draw = [&](double mean) { return -mean * std::log1p(-unif(rng)); };

    // Next accepted photon candidate at or after bin `from`.
    std::optional<std::uint64_t> sig;
    auto draw_signal = [&](std::uint64_t from) {
        sig.reset();
        if (p_max <= 0.0)
            return;
        const double log_q = std::log1p(-std::min(p_max, 1.0 - 1e-16));
        while (from < total_bins) {
            double gap = 0.0;
            if (p_max < 1.0 - 1e-16)
                gap = std::floor(std::log1p(-unif(rng)) / log_q);
            if (gap >= static_cast<double>(total_bins - from))
                return;
            const std::uint64_t cand = from + static_cast<std::uint64_t>(gap);
            if (unif(rng) * p_max < p[cand % n]) {
                sig = cand;
                return;
            }
            from = cand + 1;
        }
    };
    auto first_bin_after = [&](double t) -> std::uint64_t {
        const double b = std::ceil(t / bin_period - 0.5);
        return b <= 0.0 ? 0 : static_cast<std::uint64_t>(b);
    };

    double next_dark = det.dark_rate > 0.0 ? exp_draw(1.0 / det.dark_rate) : inf;
    std::vector<double> afterpulses;
    double dead_until = -inf;

    draw_signal(0);
    while (true) {
        const double t_sig = sig ? center(*sig) : inf;
        const double t_dark = next_dark < duration ? next_dark : inf;
        double t_ap = inf;
        std::size_t ap_index = 0;
        for (std::size_t i = 0; i < afterpulses.size(); ++i)
            if (afterpulses[i] < t_ap) {
                t_ap = afterpulses[i];
                ap_index = i;
            }
        if (t_ap >= duration)
            t_ap = inf;
        const double t_next = std::min({t_sig, t_dark, t_ap});
        if (t_next == inf)
            break;

        Origin origin;
        double recorded;
        if (t_next == t_sig) {
            origin = Origin::Signal;
            recorded = t_sig + (sigma > 0.0 ? sigma * gauss(rng) : 0.0);
        } else if (t_next == t_dark) {
            origin = Origin::Dark;
            recorded = t_dark;
        } else {
            origin = Origin::Afterpulse;
            recorded = t_ap;
            afterpulses.erase(afterpulses.begin() + static_cast<std::ptrdiff_t>(ap_index));
        }

        const bool accepted = recorded >= dead_until;
        if (accepted) {
            events.push_back({recorded, input.id, origin, std::nullopt});
            dead_until = recorded + det.dead_time;
            if (det.afterpulse_prob > 0.0 && unif(rng) < det.afterpulse_prob)
                afterpulses.push_back(recorded + exp_draw(det.afterpulse_delay_mean));
            std::erase_if(afterpulses, [&](double t) { return t < dead_until; });
        }

        if (origin == Origin::Signal) {
            // Every click, recorded or not, ends inside a dead window.
            draw_signal(std::max(sig.value_or(0) + 1, first_bin_after(dead_until - 6.0 * sigma)));
        }
        if (det.dark_rate > 0.0) {
            if (origin == Origin::Dark)
                next_dark = std::max(t_dark, dead_until) + exp_draw(1.0 / det.dark_rate);
            else if (next_dark < dead_until)
                next_dark = dead_until + exp_draw(1.0 / det.dark_rate);
        }
    }
    return events;
}

struct BinGrid {
    double first_center = 0.0;
    double period = default_tau;
    std::int64_t count = 0;
};

// Maps each event to the nearest grid bin whose centre lies within `window`;
// anything else stays unassigned.
inline void assign_bins(std::vector<DetectionEvent>& events, const BinGrid& grid, double window)
{
    for (auto& e : events) {
        e.assigned_bin.reset();
        if (grid.count <= 0)
            continue;
        const double k = std::round((e.time - grid.first_center) / grid.period);
        if (k < 0.0 || k >= static_cast<double>(grid.count))
            continue;
        const double c = grid.first_center + k * grid.period;
        if (std::abs(e.time - c) <= window)
            e.assigned_bin = static_cast<std::int64_t>(k);
    }
}

inline void assign_bins(std::vector<DetectionEvent>& events, const BinGrid& grid)
{
    assign_bins(events, grid, grid.period / 2.0);
}

// Full receiver run: optics, one detector stream per output, bin assignment on
// the frame's bin grid. Events come back sorted by time then detector.
inline std::vector<DetectionEvent> simulate_reception(const FieldTrain& bins, const ReceiverConfig& rx,
                                                      const DetectorConfig& det, double duration,
                                                      std::uint64_t seed, double window = -1.0)
{
    const double tau = bins.sample_period;
    std::vector<DetectionEvent> all;
    for (const auto& input : receiver_optics(bins, rx)) {
        auto ev = detect(input, det, tau, duration, seed);
        all.insert(all.end(), ev.begin(), ev.end());
    }
    std::sort(all.begin(), all.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
        if (a.time != b.time)
            return a.time < b.time;
        return a.detector < b.detector;
    });
    const BinGrid grid{tau / 2.0, tau, static_cast<std::int64_t>(std::floor(duration / tau + 1e-9))};
    assign_bins(all, grid, window > 0.0 ? window : tau / 2.0);
    return all;
}

// Line format: "<DETECTOR>,<index>,<time>,<origin>,<bin or ->".
inline void write_events(std::ostream& os, const std::vector<DetectionEvent>& events)
{
    os.precision(17);
    os << "# events count=" << events.size() << "\n";
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        os << to_string(e.detector) << ',' << i << ',' << e.time << ',' << to_string(e.origin) << ',';
        if (e.assigned_bin)
            os << *e.assigned_bin;
        else
            os << '-';
        os << '\n';
    }
}

inline std::vector<DetectionEvent> read_events(std::istream& is)
{
    std::vector<DetectionEvent> events;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const auto f = split(line, ',');
        if (f.size() != 5)
            fail(ErrorKind::Config, "malformed event line: " + line);
        DetectionEvent e;
        try {
            e.detector = parse_detector(f[0]);
            e.time = std::stod(f[2]);
            e.origin = parse_origin(f[3]);
            if (f[4] != "-")
                e.assigned_bin = std::stoll(f[4]);
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            fail(ErrorKind::Config, "malformed event line: " + line);
        }
        events.push_back(e);
    }
    return events;
}

} // namespace ddmqkd
