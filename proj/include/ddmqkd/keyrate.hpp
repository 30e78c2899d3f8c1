#pragma once

// Secret fraction and secret key rate from run statistics.
//
// Default formula: R = R_sift * max(0, 1 - f h(Q) - h(e_ph)), with
//   COW   Q = time QBER,  e_ph = (1 - V) / 2
//   BB84  Q = time QBER,  e_ph = phase QBER
//   DPS   Q = e_ph = phase QBER
// The privacy term is a replaceable function of (Q, e_ph).

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "ddmqkd/error.hpp"
#include "ddmqkd/sift_estimate.hpp"
#include "ddmqkd/waveform_codec.hpp"

namespace ddmqkd {

inline double binary_entropy(double p)
{
    if (!(p >= 0.0 && p <= 1.0))
        fail(ErrorKind::Domain, "binary entropy argument outside [0, 1]");
    if (p == 0.0 || p == 1.0)
        return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

struct FiniteKey {
    double block_size = 1e6;
    double epsilon = 1e-9;

    // One-sided Hoeffding upper bound on an error rate measured on block_size bits.
    double upper_bound(double q) const { return std::min(1.0, q + std::sqrt(std::log(1.0 / epsilon) / (2.0 * block_size))); }
};

using PrivacyFn = std::function<double(double qber, double e_phase)>;

inline double default_privacy(double, double e_phase) { return binary_entropy(std::min(e_phase, 0.5)); }

struct KeyRateModel {
    Protocol protocol = Protocol::COW;
    double ec_efficiency = 1.2;
    PrivacyFn privacy_fn = default_privacy;
    std::optional<FiniteKey> finite_key;

    void validate() const
    {
        if (!(ec_efficiency >= 1.0))
            fail(ErrorKind::Config, "error-correction efficiency must be at least 1");
        if (!privacy_fn)
            fail(ErrorKind::Config, "privacy function missing");
        if (finite_key && !(finite_key->block_size > 0.0 && finite_key->epsilon > 0.0 && finite_key->epsilon < 1.0))
            fail(ErrorKind::Config, "finite-key block size must be positive and epsilon in (0, 1)");
    }
};

// Error rates above 1/2 are clamped: h is taken on its increasing branch so the
// fraction never grows with Q.
inline double secret_fraction(double qber, double e_phase, const KeyRateModel& model)
{
    model.validate();
    if (!(qber >= 0.0 && qber <= 1.0) || !(e_phase >= 0.0 && e_phase <= 1.0))
        fail(ErrorKind::Domain, "error rates must lie in [0, 1]");
    if (model.finite_key) {
        qber = model.finite_key->upper_bound(qber);
        e_phase = model.finite_key->upper_bound(e_phase);
    }
    qber = std::min(qber, 0.5);
    e_phase = std::min(e_phase, 0.5);
    const double leak = model.privacy_fn(qber, e_phase);
    if (!(leak >= 0.0 && leak <= 1.0))
        fail(ErrorKind::Model, "privacy leakage outside [0, 1]");
    return std::max(0.0, 1.0 - model.ec_efficiency * binary_entropy(qber) - leak);
}

struct RateInputs {
    double qber = 0.0;
    double e_phase = 0.0;
};

inline RateInputs rate_inputs(const RunStats& stats, Protocol protocol)
{
    switch (protocol) {
    case Protocol::COW:
        if (!stats.visibility)
            fail(ErrorKind::Model, "COW secret rate needs a visibility estimate");
        return {stats.qber_time(), std::clamp((1.0 - *stats.visibility) / 2.0, 0.0, 1.0)};
    case Protocol::BB84:
        return {stats.qber_time(), stats.qber_phase()};
    case Protocol::DPS:
        return {stats.qber_phase(), stats.qber_phase()};
    }
    return {};
}

inline double secret_rate(const RunStats& stats, const KeyRateModel& model)
{
    const auto in = rate_inputs(stats, model.protocol);
    if (std::isnan(in.qber) || std::isnan(in.e_phase))
        fail(ErrorKind::Model, std::string("missing error rate for ") + to_string(model.protocol));
    return stats.sifted_rate * secret_fraction(in.qber, in.e_phase, model);
}

} // namespace ddmqkd
