#pragma once

// Dual-drive modulator (DDM) field model.
//
// A DDM is an integrated Mach-Zehnder interferometer with an independent phase
// modulator in each arm. A CW input of amplitude alpha leaves the device as
//
//     alpha * (a1 exp(i(theta1 + phi1)) + a2 exp(i(theta2 + phi2))) / 2
//
// where theta_i are the DC bias phases, phi_i the RF drive phases and
// a1 = 1 + d, a2 = 1 - d the arm transmissions. The imbalance d sets the
// finite extinction ratio (ER = 1/d^2); an ideal device has d = 0.
//
// All fields are dimensionless, in units of the CW amplitude alpha.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "ddmqkd/error.hpp"

namespace ddmqkd {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

struct ModulatorConfig {
    double v_pi = 4.0;              // volts
    double theta1 = 0.0;            // radians, DC bias of arm 1
    double theta2 = pi;             // radians, DC bias of arm 2
    double sample_period = 10e-12;  // seconds
    // Static extinction ratio in dB; +inf models a perfectly balanced device.
    double extinction_db = std::numeric_limits<double>::infinity();

    void validate() const
    {
        if (!(v_pi > 0.0))
            fail(ErrorKind::Config, "modulator v_pi must be positive");
        if (!(sample_period > 0.0))
            fail(ErrorKind::Config, "modulator sample_period must be positive");
        if (!(extinction_db > 0.0))
            fail(ErrorKind::Config, "modulator extinction_db must be positive");
    }

    // Residual off-state field amplitude d with ER = 1/d^2.
    double arm_imbalance() const
    {
        if (std::isinf(extinction_db))
            return 0.0;
        return std::pow(10.0, -extinction_db / 20.0);
    }
};

// theta_i = pi V_DC,i / V_pi and phi_i = pi V_RF,i / V_pi share one conversion.
inline double phase_from_voltage(double volts, double v_pi) { return pi * volts / v_pi; }
inline double voltage_from_phase(double phase, double v_pi) { return phase * v_pi / pi; }

inline cplx ddm_factor(double phi1, double phi2, const ModulatorConfig& cfg = {})
{
    const double d = cfg.arm_imbalance();
    return ((1.0 + d) * std::polar(1.0, cfg.theta1 + phi1) + (1.0 - d) * std::polar(1.0, cfg.theta2 + phi2)) / 2.0;
}

// Trapezoidal RF pulse: linear ramps of rise_time around a flat top.
struct PulseShape {
    double rise_time = 40e-12;
    double flat_time = 50e-12;

    double half_support() const { return flat_time / 2.0 + rise_time; }

    // Normalized drive in [0, 1] at offset dt from the pulse center.
    double value(double dt) const
    {
        const double x = std::abs(dt);
        const double half_flat = flat_time / 2.0;
        if (x <= half_flat)
            return 1.0;
        if (rise_time <= 0.0 || x >= half_flat + rise_time)
            return 0.0;
        return 1.0 - (x - half_flat) / rise_time;
    }
};

struct DrivePulse {
    int arm = 1;         // 1 or 2
    double center = 0.0; // seconds
    double level = 0.0;  // radians
};

// Two-arm drive on a shared uniform time grid. The sampled phases are always
// rendered from `pulses`, so noise models perturb pulses and re-render.
struct DriveWaveform {
    double sample_period = 10e-12;
    double t0 = 0.0;
    std::vector<double> phi1;
    std::vector<double> phi2;
    std::vector<double> level_set_arm1{0.0};
    std::vector<double> level_set_arm2{0.0};
    PulseShape shape;
    double eye_spread = 0.0;
    std::vector<DrivePulse> pulses;

    std::size_t size() const { return phi1.size(); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * sample_period; }
    double rise_time() const { return shape.rise_time; }

    const std::vector<double>& level_set(int arm) const { return arm == 1 ? level_set_arm1 : level_set_arm2; }
    int level_count(int arm) const { return static_cast<int>(level_set(arm).size()); }

    // Re-samples phi1/phi2 over n_samples from the pulse list.
    void render(std::size_t n_samples)
    {
        phi1.assign(n_samples, 0.0);
        phi2.assign(n_samples, 0.0);
        if (n_samples == 0)
            return;
        const double half = shape.half_support();
        for (const auto& p : pulses) {
            auto& arm = p.arm == 1 ? phi1 : phi2;
            const double lo = (p.center - half - t0) / sample_period;
            const double hi = (p.center + half - t0) / sample_period;
            const auto first = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(lo)));
            const auto last = std::min(static_cast<std::ptrdiff_t>(n_samples) - 1,
                                       static_cast<std::ptrdiff_t>(std::ceil(hi)));
            for (std::ptrdiff_t i = first; i <= last; ++i)
                arm[static_cast<std::size_t>(i)] += p.level * shape.value(time(static_cast<std::size_t>(i)) - p.center);
        }
    }
};

struct FieldTrain {
    std::vector<cplx> samples;
    double sample_period = 10e-12;
    double t0 = 0.0;
    // Mean photon number carried by a sample of unit magnitude.
    double alpha_ref = 1.0;

    std::size_t size() const { return samples.size(); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * sample_period; }

    double energy() const
    {
        double e = 0.0;
        for (const auto& s : samples)
            e += std::norm(s);
        return e * sample_period;
    }

    double peak_magnitude() const
    {
        double m = 0.0;
        for (const auto& s : samples)
            m = std::max(m, std::abs(s));
        return m;
    }
};

inline FieldTrain carve_train(const DriveWaveform& drive, const ModulatorConfig& cfg)
{
    if (drive.phi1.size() != drive.phi2.size())
        fail(ErrorKind::Config, "drive arms do not share one time grid");
    FieldTrain out;
    out.sample_period = drive.sample_period;
    out.t0 = drive.t0;
    out.samples.resize(drive.size());
    for (std::size_t i = 0; i < drive.size(); ++i)
        out.samples[i] = ddm_factor(drive.phi1[i], drive.phi2[i], cfg);
    return out;
}

// Sinusoidal single-arm drive phi(t) = swing (1 + sin(2 pi f t)) / 2, used to
// probe the receiver interferometer as a function of clock frequency.
inline DriveWaveform sine_drive(double frequency, double swing, std::size_t n_samples, double sample_period, int arm = 1)
{
    if (!(frequency > 0.0) || !(sample_period > 0.0))
        fail(ErrorKind::Config, "sine drive needs positive frequency and sample period");
    DriveWaveform w;
    w.sample_period = sample_period;
    w.phi1.assign(n_samples, 0.0);
    w.phi2.assign(n_samples, 0.0);
    auto& target = arm == 1 ? w.phi1 : w.phi2;
    for (std::size_t i = 0; i < n_samples; ++i)
        target[i] = swing * 0.5 * (1.0 + std::sin(2.0 * pi * frequency * w.time(i)));
    return w;
}

// Ordered field points along one pulse edge.
struct Trajectory {
    std::vector<cplx> points;
    std::vector<double> amplitudes;
    std::vector<double> phases; // unwrapped along the edge

    static Trajectory from_points(std::span<const cplx> pts, double min_amplitude = 1e-12)
    {
        Trajectory t;
        for (const auto& p : pts) {
            if (std::abs(p) < min_amplitude)
                continue;
            double ph = std::arg(p);
            if (!t.phases.empty()) {
                const double prev = t.phases.back();
                ph = prev + std::remainder(ph - prev, 2.0 * pi);
            }
            t.points.push_back(p);
            t.amplitudes.push_back(std::abs(p));
            t.phases.push_back(ph);
        }
        return t;
    }

    std::size_t size() const { return points.size(); }

    bool amplitude_monotone(double tol = 1e-15) const
    {
        for (std::size_t i = 1; i < amplitudes.size(); ++i)
            if (amplitudes[i] + tol < amplitudes[i - 1])
                return false;
        return true;
    }

    // Phase at a given amplitude, interpolated on the first crossing.
    std::pair<bool, double> phase_at(double amplitude) const
    {
        for (std::size_t i = 0; i + 1 < amplitudes.size(); ++i) {
            const double a0 = amplitudes[i];
            const double a1 = amplitudes[i + 1];
            if ((a0 <= amplitude && amplitude <= a1) || (a1 <= amplitude && amplitude <= a0)) {
                if (a1 == a0)
                    return {true, phases[i]};
                const double w = (amplitude - a0) / (a1 - a0);
                return {true, phases[i] + w * (phases[i + 1] - phases[i])};
            }
        }
        if (!amplitudes.empty() && amplitudes.back() == amplitude)
            return {true, phases.back()};
        return {false, 0.0};
    }
};

// Field trajectory produced by a normalized rise profile r(t) in [0, 1]
// applied as phi1 = arm1_swing r, phi2 = arm2_swing r.
inline Trajectory edge_trajectory(std::span<const double> profile, double arm1_swing, double arm2_swing,
                                  const ModulatorConfig& cfg = {})
{
    std::vector<cplx> pts;
    pts.reserve(profile.size());
    for (double r : profile)
        pts.push_back(ddm_factor(arm1_swing * r, arm2_swing * r, cfg));
    return Trajectory::from_points(pts);
}

// Samples from the first non-zero point of the train up to its peak.
inline Trajectory rising_edge(const FieldTrain& train, double min_amplitude = 1e-12)
{
    std::size_t peak = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const double a = std::abs(train.samples[i]);
        if (a > best + 1e-15) {
            best = a;
            peak = i;
        }
    }
    std::size_t start = 0;
    while (start < peak && std::abs(train.samples[start]) < min_amplitude)
        ++start;
    return Trajectory::from_points(std::span<const cplx>(train.samples).subspan(start, peak + 1 - start), min_amplitude);
}

struct PhaseDiffCurve {
    std::vector<std::pair<double, double>> points; // (amplitude, delta phase)
    double spread = 0.0;                           // max - min of delta phase
};

// Relative optical phase between two pulse edges as a function of field
// amplitude, evaluated on `levels` amplitudes spanning the common range.
inline PhaseDiffCurve phase_diff_vs_amplitude(const Trajectory& a, const Trajectory& b, std::size_t levels = 64)
{
    if (a.size() < 2 || b.size() < 2)
        fail(ErrorKind::Analysis, "trajectories need at least two non-zero points");
    const auto [amin_a, amax_a] = std::minmax_element(a.amplitudes.begin(), a.amplitudes.end());
    const auto [amin_b, amax_b] = std::minmax_element(b.amplitudes.begin(), b.amplitudes.end());
    const double lo = std::max(*amin_a, *amin_b);
    const double hi = std::min(*amax_a, *amax_b);
    if (!(lo < hi))
        fail(ErrorKind::Analysis, "trajectories have disjoint amplitude ranges");
    levels = std::max<std::size_t>(levels, 2);

    PhaseDiffCurve curve;
    double prev = 0.0;
    double lo_d = std::numeric_limits<double>::infinity();
    double hi_d = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < levels; ++k) {
        const double amp = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(levels - 1);
        const auto [ok_a, pa] = a.phase_at(amp);
        const auto [ok_b, pb] = b.phase_at(amp);
        if (!ok_a || !ok_b)
            continue;
        double d = pb - pa;
        if (curve.points.empty()) {
            // Representative in (-pi/2, 3pi/2] keeps both 0 and pi away from the cut.
            d = std::fmod(d + pi / 2.0, 2.0 * pi);
            if (d <= 0.0)
                d += 2.0 * pi;
            d -= pi / 2.0;
        } else {
            d = prev + std::remainder(d - prev, 2.0 * pi);
        }
        prev = d;
        lo_d = std::min(lo_d, d);
        hi_d = std::max(hi_d, d);
        curve.points.emplace_back(amp, d);
    }
    if (curve.points.empty())
        fail(ErrorKind::Analysis, "no common amplitude level found");
    curve.spread = hi_d - lo_d;
    return curve;
}

} // namespace ddmqkd
