#pragma once

// Photon-number bookkeeping between the modulator and the receiver.

#include <cmath>
#include <cstddef>
#include <string>

#include "ddmqkd/ddm_core.hpp"
#include "ddmqkd/error.hpp"

namespace ddmqkd {

enum class ReferencePlane { Transmitter, Receiver };

inline const char* to_string(ReferencePlane p) { return p == ReferencePlane::Transmitter ? "transmitter" : "receiver"; }

inline ReferencePlane parse_plane(const std::string& s)
{
    if (s == "transmitter" || s == "tx") return ReferencePlane::Transmitter;
    if (s == "receiver" || s == "rx") return ReferencePlane::Receiver;
    fail(ErrorKind::Config, "unknown reference plane '" + s + "'");
}

struct ChannelConfig {
    double fiber_length_km = 0.0;
    double loss_coeff_db_per_km = 0.2;
    double extra_loss_db = 0.0;
    double mu_target = 0.01;
    ReferencePlane plane = ReferencePlane::Receiver;

    void validate() const
    {
        if (!(loss_coeff_db_per_km >= 0.0))
            fail(ErrorKind::Config, "loss coefficient must be non-negative");
        if (!(fiber_length_km >= 0.0) || !(extra_loss_db >= 0.0))
            fail(ErrorKind::Config, "fiber length and extra loss must be non-negative");
        if (!(mu_target > 0.0))
            fail(ErrorKind::Config, "mu_target must be positive");
    }

    double total_loss_db() const { return fiber_length_km * loss_coeff_db_per_km + extra_loss_db; }
};

inline double attenuate(double mu_in, double loss_db)
{
    if (!(mu_in >= 0.0))
        fail(ErrorKind::Config, "mean photon number must be non-negative");
    if (!(loss_db >= 0.0))
        fail(ErrorKind::Config, "loss must be non-negative");
    return mu_in * std::pow(10.0, -loss_db / 10.0);
}

inline double loss_db_for_km(double km, double loss_coeff_db_per_km = 0.2)
{
    if (!(km >= 0.0) || !(loss_coeff_db_per_km >= 0.0))
        fail(ErrorKind::Config, "distance and loss coefficient must be non-negative");
    return km * loss_coeff_db_per_km;
}

inline double km_for_loss_db(double loss_db, double loss_coeff_db_per_km = 0.2)
{
    if (!(loss_coeff_db_per_km > 0.0))
        fail(ErrorKind::Config, "loss coefficient must be positive to invert");
    return loss_db / loss_coeff_db_per_km;
}

// Mean photons per qubit (per pulse for DPS) carried by a bin-sampled train
// whose unit-magnitude sample holds alpha_ref photons.
inline double mean_photons_per_qubit(const FieldTrain& train, std::size_t n_qubits)
{
    if (n_qubits == 0)
        fail(ErrorKind::Calibration, "cannot calibrate a train without qubits");
    double sum = 0.0;
    for (const auto& s : train.samples)
        sum += std::norm(s);
    return train.alpha_ref * sum / static_cast<double>(n_qubits);
}

// Intensity scale applied at the transmitter so that the mean photon number
// per qubit equals channel.mu_target at channel.plane.
inline double calibrate_voa(const FieldTrain& train, std::size_t n_qubits, const ChannelConfig& channel)
{
    channel.validate();
    const double current = mean_photons_per_qubit(train, n_qubits);
    if (!(current > 0.0))
        fail(ErrorKind::Calibration, "train carries no light");
    const double at_tx = channel.plane == ReferencePlane::Transmitter
                             ? channel.mu_target
                             : channel.mu_target * std::pow(10.0, channel.total_loss_db() / 10.0);
    return at_tx / current;
}

// Train as seen after the VOA scale and a further loss: samples stay in units
// of alpha, only the photon number per unit sample changes.
inline FieldTrain with_photon_scale(FieldTrain train, double intensity_scale, double loss_db = 0.0)
{
    train.alpha_ref = attenuate(train.alpha_ref * intensity_scale, loss_db);
    return train;
}

} // namespace ddmqkd
