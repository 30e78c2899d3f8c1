#pragma once

// Sifting of detection events against the transmitted frame, and QBER,
// visibility and rate estimation with binomial confidence intervals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "ddmqkd/error.hpp"
#include "ddmqkd/random.hpp"
#include "ddmqkd/receiver_sim.hpp"
#include "ddmqkd/waveform_codec.hpp"

namespace ddmqkd {

inline constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

// One sifted key bit. Basis Z is the time basis, X the phase basis.
struct SiftedBit {
    std::size_t symbol = 0;
    Basis basis = Basis::Z;
    std::uint8_t alice = 0;
    std::uint8_t bob = 0;
    Origin origin = Origin::Signal;

    bool error() const { return alice != bob; }
};

struct SiftResult {
    Protocol protocol = Protocol::COW;
    std::vector<SiftedBit> bits;
    // COW monitor line: clicks in bins where two adjacent pulses overlap.
    std::uint64_t monitor_constructive = 0;
    std::uint64_t monitor_destructive = 0;
    std::uint64_t monitor_dark = 0;
    std::uint64_t total_detections = 0;
    double duration = 0.0;

    void append(const SiftResult& other)
    {
        if (other.protocol != protocol)
            fail(ErrorKind::Sift, "cannot pool sift results of different protocols");
        bits.insert(bits.end(), other.bits.begin(), other.bits.end());
        monitor_constructive += other.monitor_constructive;
        monitor_destructive += other.monitor_destructive;
        monitor_dark += other.monitor_dark;
        total_detections += other.total_detections;
        duration += other.duration;
    }
};

inline bool occupied(const SymbolFrame& frame, std::size_t bin)
{
    const auto& s = frame.symbols[bin / 2];
    return s.decoy || s.bit == bin % 2;
}

// Events must carry bins on the repeated frame grid (see simulate_reception).
inline SiftResult sift(const SymbolFrame& frame, const std::vector<DetectionEvent>& events, Protocol receiver,
                       double duration)
{
    if (frame.protocol != receiver)
        fail(ErrorKind::Sift, std::string("frame protocol ") + to_string(frame.protocol) + " does not match receiver " +
                                  to_string(receiver));
    SiftResult out;
    out.protocol = receiver;
    out.total_detections = events.size();
    out.duration = duration;
    const std::size_t n_bins = frame.bins();
    if (n_bins == 0)
        return out;
    const auto arms = receiver == Protocol::DPS ? dps_pulse_arms(frame) : std::vector<int>{};

    for (const auto& e : events) {
        if (!e.assigned_bin)
            continue;
        const auto bin = static_cast<std::size_t>(*e.assigned_bin % static_cast<std::int64_t>(n_bins));
        const std::size_t prev = (bin + n_bins - 1) % n_bins;
        switch (receiver) {
        case Protocol::COW: {
            const std::size_t k = bin / 2;
            if (e.detector == DetectorId::D) {
                const auto& s = frame.symbols[k];
                if (!s.decoy)
                    out.bits.push_back({k, Basis::Z, s.bit, static_cast<std::uint8_t>(bin % 2), e.origin});
            } else if ((e.detector == DetectorId::M || e.detector == DetectorId::MDark) && occupied(frame, bin) &&
                       occupied(frame, prev)) {
                if (e.detector == DetectorId::M)
                    ++out.monitor_constructive;
                else
                    ++out.monitor_destructive;
                if (e.origin == Origin::Dark)
                    ++out.monitor_dark;
            }
            break;
        }
        case Protocol::DPS: {
            if (e.detector != DetectorId::Port0 && e.detector != DetectorId::Port1)
                fail(ErrorKind::Sift, "unexpected detector for DPS");
            const std::uint8_t alice = arms[bin] != arms[prev] ? 1 : 0;
            const std::uint8_t bob = e.detector == DetectorId::Port1 ? 1 : 0;
            // Pulse j interferes with pulse j-1, carrying bit j-1.
            out.bits.push_back({prev, Basis::X, alice, bob, e.origin});
            break;
        }
        case Protocol::BB84: {
            const std::size_t k = bin / 2;
            const auto& s = frame.symbols[k];
            if (e.detector == DetectorId::Z) {
                if (s.basis == Basis::Z)
                    out.bits.push_back({k, Basis::Z, s.bit, static_cast<std::uint8_t>(bin % 2), e.origin});
            } else if (e.detector == DetectorId::X0 || e.detector == DetectorId::X1) {
                if (s.basis == Basis::X && bin % 2 == 1)
                    out.bits.push_back(
                        {k, Basis::X, s.bit, static_cast<std::uint8_t>(e.detector == DetectorId::X1), e.origin});
            } else {
                fail(ErrorKind::Sift, "unexpected detector for BB84");
            }
            break;
        }
        }
    }
    return out;
}

struct Interval {
    double lo = nan_value;
    double hi = nan_value;
};

// Wilson score interval; z = 1.96 for 95%.
inline Interval wilson_interval(std::uint64_t errors, std::uint64_t n, double z = 1.96)
{
    if (n == 0)
        return {};
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(errors) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct BasisStats {
    std::uint64_t count = 0;
    std::uint64_t errors = 0;
    std::uint64_t dark = 0;
    std::uint64_t sampled_count = 0;
    std::uint64_t sampled_errors = 0;

    double qber() const { return count ? static_cast<double>(errors) / static_cast<double>(count) : nan_value; }
    Interval ci() const { return wilson_interval(errors, count); }

    // Largest distance from the point estimate to an interval end.
    double ci_halfwidth() const
    {
        if (!count)
            return nan_value;
        const auto i = ci();
        return std::max(qber() - i.lo, i.hi - qber());
    }

    double sampled_qber() const
    {
        return sampled_count ? static_cast<double>(sampled_errors) / static_cast<double>(sampled_count) : nan_value;
    }
    Interval sampled_ci() const { return wilson_interval(sampled_errors, sampled_count); }

    // Error rate after removing dark clicks, which are right half the time.
    double optical_qber() const
    {
        const double n = static_cast<double>(count) - static_cast<double>(dark);
        if (!(n > 0.0))
            return nan_value;
        const double e = static_cast<double>(errors) - static_cast<double>(dark) / 2.0;
        return std::clamp(e / n, 0.0, 1.0);
    }
};

struct RunStats {
    Protocol protocol = Protocol::COW;
    std::uint64_t sifted_count = 0;
    std::uint64_t total_detections = 0;
    double duration = 0.0;
    double sifted_rate = 0.0; // bits/s
    double sample_fraction = 0.125;
    BasisStats time;
    BasisStats phase;
    std::optional<double> visibility;

    std::uint64_t error_count_time() const { return time.errors; }
    std::uint64_t error_count_phase() const { return phase.errors; }
    double qber_time() const { return time.qber(); }
    double qber_phase() const { return phase.qber(); }
};

// The sampled subset is what a real run would disclose; the full-information
// QBER is reported next to it.
inline RunStats estimate(const SiftResult& sifted, double sample_fraction, std::uint64_t seed)
{
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
        fail(ErrorKind::Estimation, "sample fraction must lie in (0, 1]");
    if (sifted.bits.empty())
        fail(ErrorKind::Estimation, "no sifted bits to estimate from");

    RunStats st;
    st.protocol = sifted.protocol;
    st.sample_fraction = sample_fraction;
    st.sifted_count = sifted.bits.size();
    st.total_detections = sifted.total_detections;
    st.duration = sifted.duration;
    st.sifted_rate = sifted.duration > 0.0 ? static_cast<double>(st.sifted_count) / sifted.duration : nan_value;

    Rng rng = make_rng(seed, {0x5A3B1E});
    std::bernoulli_distribution pick(sample_fraction);
    for (const auto& b : sifted.bits) {
        auto& bs = b.basis == Basis::Z ? st.time : st.phase;
        ++bs.count;
        bs.errors += b.error();
        bs.dark += b.origin == Origin::Dark;
        if (pick(rng)) {
            ++bs.sampled_count;
            bs.sampled_errors += b.error();
        }
    }

    if (sifted.protocol == Protocol::COW) {
        const std::uint64_t c = sifted.monitor_constructive;
        const std::uint64_t w = sifted.monitor_destructive;
        st.phase.count = c + w;
        st.phase.errors = w;
        st.phase.dark = sifted.monitor_dark;
        st.phase.sampled_count = c + w;
        st.phase.sampled_errors = w;
        if (c + w > 0)
            st.visibility = (static_cast<double>(c) - static_cast<double>(w)) / static_cast<double>(c + w);
    } else if (st.phase.count > 0) {
        st.visibility = 1.0 - 2.0 * st.phase.qber();
    }
    return st;
}

} // namespace ddmqkd
