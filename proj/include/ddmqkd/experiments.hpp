#pragma once

// Experiment orchestration: configuration binding, the end-to-end link run
// (encode, carve, attenuate, detect, sift, estimate) and the five sweeps
// exposed by the CLI, each with a CSV writer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ddmqkd/config.hpp"
#include "ddmqkd/ddm_core.hpp"
#include "ddmqkd/error.hpp"
#include "ddmqkd/keyrate.hpp"
#include "ddmqkd/link_channel.hpp"
#include "ddmqkd/random.hpp"
#include "ddmqkd/receiver_sim.hpp"
#include "ddmqkd/sift_estimate.hpp"
#include "ddmqkd/waveform_codec.hpp"

namespace ddmqkd {

struct StabilityConfig {
    double hours = 40.0;
    double interval = 10.0;             // s between controller updates
    double bias_drift = 0.4;            // V / sqrt(h), random walk on V_DC,1
    double wavelength_drift = 0.5;      // rad / sqrt(h), interferometer phase
    double dither = 0.02;               // rad
    double mu = 1e-2;                   // photons per pulse at the receiver
    double significance = 2.0;          // deadband in standard deviations
    std::uint64_t report_every = 6;     // intervals per CSV row
    std::string controller = "both";    // on, off, nodrift or both
};

struct ExperimentConfig {
    Protocol protocol = Protocol::COW;
    std::uint64_t seed = 1;
    std::uint64_t trials = 1;
    std::uint64_t frame_symbols = 4096;
    double decoy_prob = 0.155;
    double duration = 0.2; // simulated detection time per trial, s

    ModulatorConfig modulator;
    NoiseModel noise;
    EncoderOptions encoder;
    ChannelConfig channel;
    ReceiverConfig receiver;
    DetectorConfig detector;
    double sample_fraction = 0.125;

    double ec_efficiency = 1.2;
    std::string finite_key = "auto"; // auto: on for COW only
    double block_size = 1e6;
    double epsilon = 1e-9;

    std::vector<double> mu_list{1.0, 0.31622776601683794, 0.1, 0.031622776601683794, 0.01, 0.0031622776601683794,
                                0.001, 0.00031622776601683794, 1e-4, 3.1622776601683795e-05, 1e-5};

    std::vector<double> chirp_eye_spreads{0.0, 0.05, 0.1, 0.15, 0.2};
    std::uint64_t chirp_symbols = 1000000;
    double chirp_visibility = 1.0;

    double freq_min = 1.0e9;
    double freq_max = 1.5e9;
    double freq_step = 5e6;
    double freq_swing = pi / 2.0;
    double freq_window = 200e-9;

    StabilityConfig stability;

    std::vector<double> extinction_db_list{20.0, 23.0, 25.0, 27.0, 30.0};
    std::uint64_t extinction_qubits = 1000000;
    double extinction_mu = 0.5;
    double extinction_duration = 0.02;

    std::string hash;
    std::string canonical;

    KeyRateModel keyrate_model() const
    {
        KeyRateModel m;
        m.protocol = protocol;
        m.ec_efficiency = ec_efficiency;
        const bool fk = finite_key == "auto" ? protocol == Protocol::COW : parse_bool("keyrate.finite_key", finite_key);
        if (fk)
            m.finite_key = FiniteKey{block_size, epsilon};
        return m;
    }
};

inline ExperimentConfig bind_config(const KeyValues& kv)
{
    ExperimentConfig c;
    Binder b(kv);
    std::string protocol = to_string(c.protocol);
    std::string plane = to_string(c.channel.plane);
    std::string distribution = "uniform";
    double penalty2 = c.noise.penalty(2), penalty3 = c.noise.penalty(3), penalty4 = c.noise.penalty(4);

    b.bind("protocol", protocol);
    b.bind("seed", c.seed);
    b.bind("trials", c.trials);
    b.bind("frame_symbols", c.frame_symbols);
    b.bind("decoy_prob", c.decoy_prob);
    b.bind("duration", c.duration);

    b.bind("modulator.v_pi", c.modulator.v_pi);
    b.bind("modulator.theta1", c.modulator.theta1);
    b.bind("modulator.theta2", c.modulator.theta2);
    b.bind("modulator.sample_period", c.modulator.sample_period);
    b.bind("modulator.extinction_db", c.modulator.extinction_db);
    b.bind("pulse.rise_time", c.encoder.shape.rise_time);
    b.bind("pulse.flat_time", c.encoder.shape.flat_time);
    b.bind("encoder.cow_single_arm", c.encoder.cow_single_arm);
    b.bind("encoder.bb84_push_pull", c.encoder.bb84_push_pull);

    b.bind("noise.eye_spread", c.noise.base_eye_spread);
    b.bind("noise.distribution", distribution);
    b.bind("noise.arm_mismatch", c.noise.arm_mismatch);
    b.bind("noise.penalty2", penalty2);
    b.bind("noise.penalty3", penalty3);
    b.bind("noise.penalty4", penalty4);

    b.bind("channel.fiber_km", c.channel.fiber_length_km);
    b.bind("channel.loss_db_per_km", c.channel.loss_coeff_db_per_km);
    b.bind("channel.extra_loss_db", c.channel.extra_loss_db);
    b.bind("channel.plane", plane);

    b.bind("receiver.delay", c.receiver.interferometer_delay);
    b.bind("receiver.visibility", c.receiver.interferometer_visibility);
    b.bind("receiver.interferometer_loss_db", c.receiver.interferometer_loss_db);
    b.bind("receiver.circulator_loss_db", c.receiver.circulator_loss_db);
    b.bind("receiver.monitor_ratio", c.receiver.monitor_coupler_ratio);
    b.bind("receiver.basis_ratio", c.receiver.basis_coupler_ratio);

    b.bind("detector.efficiency", c.detector.efficiency);
    b.bind("detector.dark_rate", c.detector.dark_rate);
    b.bind("detector.dead_time", c.detector.dead_time);
    b.bind("detector.jitter_fwhm", c.detector.jitter_fwhm);
    b.bind("detector.afterpulse_prob", c.detector.afterpulse_prob);
    b.bind("detector.afterpulse_delay", c.detector.afterpulse_delay_mean);

    b.bind("estimate.sample_fraction", c.sample_fraction);
    b.bind("keyrate.ec_efficiency", c.ec_efficiency);
    b.bind("keyrate.finite_key", c.finite_key);
    b.bind("keyrate.block_size", c.block_size);
    b.bind("keyrate.epsilon", c.epsilon);

    b.bind("mu_sweep.mu_list", c.mu_list);

    b.bind("chirp.eye_spreads", c.chirp_eye_spreads);
    b.bind("chirp.symbols", c.chirp_symbols);
    b.bind("chirp.visibility", c.chirp_visibility);

    b.bind("freq.min", c.freq_min);
    b.bind("freq.max", c.freq_max);
    b.bind("freq.step", c.freq_step);
    b.bind("freq.swing", c.freq_swing);
    b.bind("freq.window", c.freq_window);

    b.bind("stability.hours", c.stability.hours);
    b.bind("stability.interval", c.stability.interval);
    b.bind("stability.bias_drift", c.stability.bias_drift);
    b.bind("stability.wavelength_drift", c.stability.wavelength_drift);
    b.bind("stability.dither", c.stability.dither);
    b.bind("stability.mu", c.stability.mu);
    b.bind("stability.significance", c.stability.significance);
    b.bind("stability.report_every", c.stability.report_every);
    b.bind("stability.controller", c.stability.controller);

    b.bind("extinction.db_list", c.extinction_db_list);
    b.bind("extinction.qubits", c.extinction_qubits);
    b.bind("extinction.mu", c.extinction_mu);
    b.bind("extinction.duration", c.extinction_duration);
    b.reject_unknown();

    c.protocol = parse_protocol(protocol);
    c.receiver.protocol = c.protocol;
    c.channel.plane = parse_plane(plane);
    if (distribution == "uniform")
        c.noise.distribution = NoiseDistribution::Uniform;
    else if (distribution == "gaussian")
        c.noise.distribution = NoiseDistribution::Gaussian;
    else
        fail(ErrorKind::Config, "unknown noise distribution '" + distribution + "'");
    c.noise.level_penalty = {{2, penalty2}, {3, penalty3}, {4, penalty4}};

    if (c.trials < 1)
        fail(ErrorKind::Config, "trials must be at least 1");
    if (c.frame_symbols < 1)
        fail(ErrorKind::Config, "frame_symbols must be at least 1");
    if (!(c.decoy_prob >= 0.0 && c.decoy_prob < 1.0))
        fail(ErrorKind::Config, "decoy_prob must lie in [0, 1)");
    if (!(c.duration > 0.0) || !(c.extinction_duration > 0.0))
        fail(ErrorKind::Config, "durations must be positive");
    if (!(c.sample_fraction > 0.0 && c.sample_fraction <= 1.0))
        fail(ErrorKind::Config, "estimate.sample_fraction must lie in (0, 1]");
    for (double mu : c.mu_list)
        if (!(mu > 0.0))
            fail(ErrorKind::Config, "mu_sweep.mu_list entries must be positive");
    if (!(c.freq_min > 0.0 && c.freq_max >= c.freq_min && c.freq_step > 0.0 && c.freq_window > 0.0))
        fail(ErrorKind::Config, "frequency grid must be positive and ordered");
    const auto& s = c.stability;
    if (!(s.hours > 0.0 && s.interval > 0.0 && s.dither > 0.0 && s.mu > 0.0 && s.report_every >= 1))
        fail(ErrorKind::Config, "stability run parameters must be positive");
    if (!(s.bias_drift >= 0.0 && s.wavelength_drift >= 0.0 && s.significance >= 0.0))
        fail(ErrorKind::Config, "drift scales must be non-negative");
    if (s.controller != "on" && s.controller != "off" && s.controller != "nodrift" && s.controller != "both")
        fail(ErrorKind::Config, "stability.controller must be on, off, nodrift or both");
    if (c.finite_key != "auto")
        parse_bool("keyrate.finite_key", c.finite_key);
    c.modulator.validate();
    c.noise.validate();
    c.channel.validate();
    c.receiver.validate();
    c.detector.validate();
    c.keyrate_model().validate();

    c.hash = b.hash();
    c.canonical = b.canonical();
    return c;
}

inline ExperimentConfig default_config() { return bind_config(KeyValues{}); }

inline std::string csv_num(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::size_t qubits_in(const SymbolFrame& frame)
{
    return frame.protocol == Protocol::DPS ? frame.bins() : frame.symbols.size();
}

// One sample per time bin, taken at the bin centres.
inline FieldTrain bin_train(const SymbolFrame& frame, const ExperimentConfig& c, std::uint64_t noise_seed)
{
    ModulatorConfig m = c.modulator;
    m.sample_period = frame.tau;
    NoiseModel noise = c.noise;
    noise.seed = noise_seed;
    return carve_train(encode(frame, noise, m, c.encoder), m);
}

// Scales the train so each qubit (pulse for DPS) carries mu photons at the
// receiver input, with channel loss applied after the transmitter VOA.
inline FieldTrain train_at_receiver(const FieldTrain& train, const SymbolFrame& frame, ChannelConfig channel,
                                    double mu)
{
    channel.mu_target = mu;
    channel.plane = ReferencePlane::Receiver;
    const double scale = calibrate_voa(train, qubits_in(frame), channel);
    return with_photon_scale(train, scale, channel.total_loss_db());
}

inline SiftResult run_link_trial(const ExperimentConfig& c, double mu, std::uint64_t seed)
{
    const double decoy = c.protocol == Protocol::COW ? c.decoy_prob : 0.0;
    const auto frame = random_frame(c.protocol, c.frame_symbols, decoy, derive_seed(seed, {1}));
    const auto rx = train_at_receiver(bin_train(frame, c, derive_seed(seed, {2})), frame, c.channel, mu);
    const auto events = simulate_reception(rx, c.receiver, c.detector, c.duration, derive_seed(seed, {3}));
    return sift(frame, events, c.protocol, c.duration);
}

// Trials run concurrently and are pooled in trial order.
inline RunStats run_link(const ExperimentConfig& c, double mu, std::uint64_t point_seed)
{
    std::vector<std::future<SiftResult>> jobs;
    for (std::uint64_t t = 0; t < c.trials; ++t)
        jobs.push_back(std::async(std::launch::async, run_link_trial, std::cref(c), mu, derive_seed(point_seed, {t})));
    SiftResult pooled;
    pooled.protocol = c.protocol;
    for (auto& j : jobs)
        pooled.append(j.get());
    return estimate(pooled, c.sample_fraction, derive_seed(point_seed, {0xE57}));
}

struct MuPoint {
    double mu = 0.0;
    RunStats stats;
    double secret_rate = 0.0;
};

inline std::vector<MuPoint> run_mu_sweep(const ExperimentConfig& c)
{
    if (c.mu_list.size() < 2)
        fail(ErrorKind::Config, "mu sweep needs at least two points");
    std::vector<MuPoint> out;
    const auto model = c.keyrate_model();
    for (std::size_t i = 0; i < c.mu_list.size(); ++i) {
        MuPoint p;
        p.mu = c.mu_list[i];
        p.stats = run_link(c, p.mu, derive_seed(c.seed, {0x5E, i}));
        p.secret_rate = secret_rate(p.stats, model);
        out.push_back(p);
    }
    return out;
}

inline void write_mu_sweep_csv(std::ostream& os, const std::vector<MuPoint>& rows, const std::string& hash)
{
    os << "mu,sifted_rate_bps,qber_time,qber_time_ci,qber_phase,qber_phase_ci,visibility,secret_rate_bps,config_hash\n";
    for (const auto& r : rows) {
        const auto& s = r.stats;
        os << csv_num(r.mu) << ',' << csv_num(s.sifted_rate) << ',' << csv_num(s.qber_time()) << ','
           << csv_num(s.time.ci_halfwidth()) << ',' << csv_num(s.qber_phase()) << ',' << csv_num(s.phase.ci_halfwidth())
           << ',' << csv_num(s.visibility.value_or(nan_value)) << ',' << csv_num(r.secret_rate) << ',' << hash << '\n';
    }
}

// Phase-basis error of BB84 X states from the expected port intensities of
// the central bin, so the figure isolates drive noise from counting noise.
inline double x_state_phase_qber(const SymbolFrame& frame, const FieldTrain& train, const ReceiverConfig& rx)
{
    const auto ports = interfere(train, rx, true);
    double right = 0.0;
    double wrong = 0.0;
    for (std::size_t k = 0; k < frame.symbols.size(); ++k) {
        const auto& s = frame.symbols[k];
        if (s.basis != Basis::X)
            continue;
        const double i0 = ports.port0[2 * k + 1];
        const double i1 = ports.port1[2 * k + 1];
        right += s.bit ? i1 : i0;
        wrong += s.bit ? i0 : i1;
    }
    return right + wrong > 0.0 ? wrong / (right + wrong) : nan_value;
}

struct ChirpPoint {
    double eye_spread = 0.0;
    std::string scheme;
    int levels_arm1 = 0;
    int levels_arm2 = 0;
    std::vector<double> trial_qber;

    double mean() const
    {
        double s = 0.0;
        for (double q : trial_qber)
            s += q;
        return trial_qber.empty() ? nan_value : s / static_cast<double>(trial_qber.size());
    }
};

inline ChirpPoint chirp_point(const ExperimentConfig& c, double eye_spread, bool push_pull)
{
    ExperimentConfig cc = c;
    cc.noise.base_eye_spread = eye_spread;
    cc.encoder.bb84_push_pull = push_pull;
    ReceiverConfig rx = c.receiver;
    rx.protocol = Protocol::BB84;
    rx.interferometer_visibility = c.chirp_visibility;

    ChirpPoint p;
    p.eye_spread = eye_spread;
    p.scheme = push_pull ? "push-pull" : "chirped";
    std::vector<std::future<double>> jobs;
    for (std::uint64_t t = 0; t < c.trials; ++t) {
        // Both schemes see the same frame and noise seed within a trial.
        jobs.push_back(std::async(std::launch::async, [&cc, &rx, t] {
            const std::uint64_t seed = derive_seed(cc.seed, {0xC4, t});
            auto frame = random_frame(Protocol::BB84, cc.chirp_symbols, 0.0, seed);
            for (auto& s : frame.symbols)
                s.basis = Basis::X;
            return x_state_phase_qber(frame, bin_train(frame, cc, derive_seed(seed, {2})), rx);
        }));
    }
    for (auto& j : jobs)
        p.trial_qber.push_back(j.get());

    ModulatorConfig m = c.modulator;
    SymbolFrame probe;
    probe.protocol = Protocol::BB84;
    probe.symbols = {{0, Basis::X, false}};
    const auto w = encode(probe, NoiseModel{}, m, cc.encoder);
    p.levels_arm1 = w.level_count(1);
    p.levels_arm2 = w.level_count(2);
    return p;
}

inline std::vector<ChirpPoint> run_chirp_study(const ExperimentConfig& c)
{
    std::vector<ChirpPoint> out;
    for (double e : c.chirp_eye_spreads) {
        out.push_back(chirp_point(c, e, false));
        out.push_back(chirp_point(c, e, true));
    }
    return out;
}

inline void write_chirp_csv(std::ostream& os, const std::vector<ChirpPoint>& rows, const std::string& hash)
{
    os << "eye_spread,scheme,levels_arm1,levels_arm2,phase_qber,phase_qber_min,phase_qber_max,trials,config_hash\n";
    for (const auto& r : rows) {
        double lo = nan_value, hi = nan_value;
        if (!r.trial_qber.empty()) {
            lo = *std::min_element(r.trial_qber.begin(), r.trial_qber.end());
            hi = *std::max_element(r.trial_qber.begin(), r.trial_qber.end());
        }
        os << csv_num(r.eye_spread) << ',' << r.scheme << ',' << r.levels_arm1 << ',' << r.levels_arm2 << ','
           << csv_num(r.mean()) << ',' << csv_num(lo) << ',' << csv_num(hi) << ',' << r.trial_qber.size() << ','
           << hash << '\n';
    }
}

struct FreqPoint {
    double frequency = 0.0;
    double overlap = 0.0;    // drive-limited contrast
    double visibility = 0.0; // including the interferometer's own visibility
    double qber_phase = 0.0;
};

inline FreqPoint freq_point(const ExperimentConfig& c, double f)
{
    const double dt = c.modulator.sample_period;
    const auto n = static_cast<std::size_t>(std::ceil(c.freq_window / dt));
    const auto train = carve_train(sine_drive(f, c.freq_swing, n, dt), c.modulator);
    FreqPoint p;
    p.frequency = f;
    p.overlap = delayed_overlap_visibility(train, c.receiver.interferometer_delay);
    p.visibility = c.receiver.interferometer_visibility * p.overlap;
    p.qber_phase = (1.0 - p.visibility) / 2.0;
    return p;
}

inline std::vector<FreqPoint> run_freq_sweep(const ExperimentConfig& c)
{
    std::vector<FreqPoint> out;
    const auto steps = static_cast<std::size_t>(std::floor((c.freq_max - c.freq_min) / c.freq_step + 1e-9));
    for (std::size_t i = 0; i <= steps; ++i)
        out.push_back(freq_point(c, c.freq_min + static_cast<double>(i) * c.freq_step));
    return out;
}

inline void write_freq_csv(std::ostream& os, const std::vector<FreqPoint>& rows, const std::string& hash)
{
    os << "clock_freq_hz,overlap_visibility,visibility,qber_phase,config_hash\n";
    for (const auto& r : rows)
        os << csv_num(r.frequency) << ',' << csv_num(r.overlap) << ',' << csv_num(r.visibility) << ','
           << csv_num(r.qber_phase) << ',' << hash << '\n';
}

struct ExtinctionPoint {
    double extinction_db = 0.0;
    double optical_qber = 0.0; // expected, from bin intensities over the frame
    double mc_qber = 0.0;
    double mc_ci = 0.0;
    std::uint64_t mc_count = 0;
};

inline ExtinctionPoint extinction_point(const ExperimentConfig& c, double er_db, std::uint64_t seed)
{
    ExperimentConfig cc = c;
    cc.protocol = Protocol::COW;
    cc.receiver.protocol = Protocol::COW;
    cc.modulator.extinction_db = er_db;
    cc.noise = NoiseModel{};
    const auto frame = random_frame(Protocol::COW, c.extinction_qubits, c.decoy_prob, derive_seed(seed, {1}));
    const auto rx = train_at_receiver(bin_train(frame, cc, 0), frame, cc.channel, c.extinction_mu);

    ExtinctionPoint p;
    p.extinction_db = er_db;
    const auto optics = receiver_optics(rx, cc.receiver);
    const auto& data = optics.front().mean_photons;
    double right = 0.0;
    double wrong = 0.0;
    for (std::size_t k = 0; k < frame.symbols.size(); ++k) {
        const auto& s = frame.symbols[k];
        if (s.decoy)
            continue;
        right += data[2 * k + s.bit];
        wrong += data[2 * k + 1 - s.bit];
    }
    p.optical_qber = wrong / (right + wrong);

    DetectorConfig det = c.detector;
    det.dark_rate = 0.0;
    det.dead_time = 0.0;
    det.afterpulse_prob = 0.0;
    const auto events = simulate_reception(rx, cc.receiver, det, c.extinction_duration, derive_seed(seed, {3}));
    const auto st = estimate(sift(frame, events, Protocol::COW, c.extinction_duration), c.sample_fraction,
                             derive_seed(seed, {4}));
    p.mc_qber = st.qber_time();
    p.mc_ci = st.time.ci_halfwidth();
    p.mc_count = st.time.count;
    return p;
}

inline std::vector<ExtinctionPoint> run_extinction(const ExperimentConfig& c)
{
    std::vector<std::future<ExtinctionPoint>> jobs;
    for (std::size_t i = 0; i < c.extinction_db_list.size(); ++i)
        jobs.push_back(std::async(std::launch::async, extinction_point, std::cref(c), c.extinction_db_list[i],
                                  derive_seed(c.seed, {0xE7, i})));
    std::vector<ExtinctionPoint> out;
    for (auto& j : jobs)
        out.push_back(j.get());
    return out;
}

inline void write_extinction_csv(std::ostream& os, const std::vector<ExtinctionPoint>& rows, const std::string& hash)
{
    os << "extinction_db,qber_time_optical,qber_time_mc,qber_time_mc_ci,sifted_bits,config_hash\n";
    for (const auto& r : rows)
        os << csv_num(r.extinction_db) << ',' << csv_num(r.optical_qber) << ',' << csv_num(r.mc_qber) << ','
           << csv_num(r.mc_ci) << ',' << r.mc_count << ',' << hash << '\n';
}

// Stability run for COW at a fixed photon number. Each interval draws Poisson
// counts from the expected click rates of the data and monitor detectors
// given the current bias and interferometer phase errors.
struct StabilityRates {
    double right = 0.0;
    double wrong = 0.0;
    double constructive = 0.0;
    double destructive = 0.0;

    double qber_time() const { return wrong / (right + wrong); }
    double qber_phase() const { return destructive / (constructive + destructive); }
};

inline StabilityRates stability_rates(const ExperimentConfig& c, double bias_error, double phase_error)
{
    ModulatorConfig m = c.modulator;
    m.theta1 += bias_error;
    const double pulse = std::norm(ddm_factor(pi / 2.0, -pi / 2.0, m));
    const double empty = std::norm(ddm_factor(0.0, 0.0, m));
    const double tau = c.receiver.interferometer_delay;
    const double qubit_rate = 1.0 / (2.0 * tau);
    const double dec = c.decoy_prob;
    const double eta = c.detector.efficiency;
    const double tap = c.receiver.monitor_coupler_ratio;
    const double dark = c.detector.dark_rate;
    const double mu = c.stability.mu;
    auto click = [eta](double photons) { return -std::expm1(-eta * photons); };

    StabilityRates r;
    const double mu_pulse = mu * pulse * (1.0 - tap);
    const double mu_empty = mu * empty * (1.0 - tap);
    r.right = qubit_rate * (1.0 - dec) * click(mu_pulse) + dark * (1.0 - dec) / 2.0;
    r.wrong = qubit_rate * (1.0 - dec) * click(mu_empty) + dark * (1.0 - dec) / 2.0;
    const double data_total = r.right + r.wrong + qubit_rate * dec * 2.0 * click(mu_pulse) + dark * dec;
    const double data_live = 1.0 / (1.0 + data_total * c.detector.dead_time);
    r.right *= data_live;
    r.wrong *= data_live;

    // Bins holding two adjacent pulses: inside decoys and across a 1-0 boundary.
    const double pair_rate = qubit_rate * (dec + (1.0 - dec) / 2.0 * ((1.0 - dec) / 2.0 + dec));
    const double v = c.receiver.interferometer_visibility * std::cos(phase_error);
    const double mu_line = mu * pulse * tap * std::pow(10.0, -c.receiver.phase_line_loss_db() / 10.0);
    const double dark_share = dark * pair_rate * tau;
    r.constructive = pair_rate * click(mu_line * (1.0 + v) / 2.0) + dark_share;
    r.destructive = pair_rate * click(mu_line * (1.0 - v) / 2.0) + dark_share;
    const double mon_c = r.constructive + dark * (1.0 - pair_rate * tau);
    const double mon_w = r.destructive + dark * (1.0 - pair_rate * tau);
    r.constructive /= 1.0 + mon_c * c.detector.dead_time;
    r.destructive /= 1.0 + mon_w * c.detector.dead_time;
    return r;
}

struct StabilitySample {
    double t_hours = 0.0;
    double qber_time = 0.0;
    double qber_phase = 0.0;
    double visibility = 0.0;
    double bias_setting = 0.0;       // V
    double wavelength_setting = 0.0; // rad
    double bias_error = 0.0;         // rad
    double phase_error = 0.0;        // rad
};

struct StabilityRun {
    std::string mode;
    std::vector<StabilitySample> samples;

    double mean_qber_time() const
    {
        double s = 0.0;
        for (const auto& x : samples)
            s += x.qber_time;
        return s / static_cast<double>(samples.size());
    }
    double mean_qber_phase() const
    {
        double s = 0.0;
        for (const auto& x : samples)
            s += x.qber_phase;
        return s / static_cast<double>(samples.size());
    }
    double max_qber() const
    {
        double m = 0.0;
        for (const auto& x : samples)
            m = std::max({m, x.qber_time, x.qber_phase});
        return m;
    }
};

// Long-run optimum: expected QBERs at zero bias and phase error.
inline StabilityRates stability_optimum(const ExperimentConfig& c) { return stability_rates(c, 0.0, 0.0); }

inline StabilityRun run_stability_mode(const ExperimentConfig& c, const std::string& mode)
{
    const auto& s = c.stability;
    const bool drift = mode != "nodrift";
    const bool control = mode != "off";
    const auto n = static_cast<std::size_t>(std::llround(s.hours * 3600.0 / s.interval));
    const double step_h = s.interval / 3600.0;
    const double bias_sigma = phase_from_voltage(s.bias_drift, c.modulator.v_pi) * std::sqrt(step_h);
    const double phase_sigma = s.wavelength_drift * std::sqrt(step_h);

    Rng drift_rng = make_rng(c.seed, {0xD21F7});
    Rng count_rng = make_rng(c.seed, {0xC0, fnv1a64(mode)});
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto poisson = [&count_rng](double mean) {
        return static_cast<double>(std::poisson_distribution<std::uint64_t>(std::max(mean, 1e-300))(count_rng));
    };

    double bias_drift = 0.0;
    double phase_drift = 0.0;
    double bias_set = 0.0;
    double phase_set = 0.0;
    const double half = s.interval / 2.0;
    const double dither = control ? s.dither : 0.0;

    StabilityRun run;
    run.mode = mode;
    for (std::size_t i = 0; i < n; ++i) {
        if (drift) {
            bias_drift += bias_sigma * gauss(drift_rng);
            phase_drift += phase_sigma * gauss(drift_rng);
        } else {
            gauss(drift_rng);
            gauss(drift_rng);
        }
        // Two half-intervals dithered to either side of the current setting.
        double cnt[2][4];
        for (int h = 0; h < 2; ++h) {
            const double d = h == 0 ? dither : -dither;
            const auto r = stability_rates(c, bias_drift - (bias_set + d), phase_drift - (phase_set + d));
            cnt[h][0] = poisson(r.right * half);
            cnt[h][1] = poisson(r.wrong * half);
            cnt[h][2] = poisson(r.constructive * half);
            cnt[h][3] = poisson(r.destructive * half);
        }
        StabilitySample x;
        x.t_hours = static_cast<double>(i + 1) * step_h;
        const double nt = cnt[0][0] + cnt[0][1] + cnt[1][0] + cnt[1][1];
        const double np = cnt[0][2] + cnt[0][3] + cnt[1][2] + cnt[1][3];
        x.qber_time = nt > 0.0 ? (cnt[0][1] + cnt[1][1]) / nt : 0.5;
        x.qber_phase = np > 0.0 ? (cnt[0][3] + cnt[1][3]) / np : 0.5;
        x.visibility = 1.0 - 2.0 * x.qber_phase;
        x.bias_error = bias_drift - bias_set;
        x.phase_error = phase_drift - phase_set;

        if (control) {
            auto decide = [&](double e_plus, double n_plus, double e_minus, double n_minus, double& setting) {
                if (n_plus <= 0.0 || n_minus <= 0.0)
                    return;
                const double qp = e_plus / n_plus;
                const double qm = e_minus / n_minus;
                const double sd = std::sqrt(qp * (1.0 - qp) / n_plus + qm * (1.0 - qm) / n_minus);
                if (std::abs(qp - qm) > s.significance * sd)
                    setting += qp > qm ? -s.dither : s.dither;
            };
            decide(cnt[0][1], cnt[0][0] + cnt[0][1], cnt[1][1], cnt[1][0] + cnt[1][1], bias_set);
            decide(cnt[0][3], cnt[0][2] + cnt[0][3], cnt[1][3], cnt[1][2] + cnt[1][3], phase_set);
        }
        x.bias_setting = voltage_from_phase(bias_set, c.modulator.v_pi);
        x.wavelength_setting = phase_set;
        run.samples.push_back(x);
    }
    return run;
}

inline std::vector<StabilityRun> run_stability(const ExperimentConfig& c)
{
    std::vector<std::string> modes;
    if (c.stability.controller == "both")
        modes = {"on", "off", "nodrift"};
    else
        modes = {c.stability.controller};
    std::vector<std::future<StabilityRun>> jobs;
    for (const auto& m : modes)
        jobs.push_back(std::async(std::launch::async, run_stability_mode, std::cref(c), m));
    std::vector<StabilityRun> out;
    for (auto& j : jobs)
        out.push_back(j.get());
    return out;
}

inline void write_stability_csv(std::ostream& os, const std::vector<StabilityRun>& runs, std::uint64_t report_every,
                                const std::string& hash)
{
    os << "mode,t_hours,qber_time,qber_phase,visibility,bias_setting_v,wavelength_setting_rad,bias_error_rad,"
          "phase_error_rad,config_hash\n";
    for (const auto& run : runs)
        for (std::size_t i = report_every - 1; i < run.samples.size(); i += report_every) {
            const auto& x = run.samples[i];
            os << run.mode << ',' << csv_num(x.t_hours) << ',' << csv_num(x.qber_time) << ','
               << csv_num(x.qber_phase) << ',' << csv_num(x.visibility) << ',' << csv_num(x.bias_setting) << ','
               << csv_num(x.wavelength_setting) << ',' << csv_num(x.bias_error) << ',' << csv_num(x.phase_error)
               << ',' << hash << '\n';
        }
}

} // namespace ddmqkd
