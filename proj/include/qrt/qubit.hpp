#pragma once

#include <cstdint>

#include "qrt/rng.hpp"

namespace qrt {

// Polarization bases of the prepare-and-measure protocol. Measuring in the
// matched basis reproduces the encoded bit; a mismatched basis yields a
// uniformly random bit.
enum class Basis : uint8_t { Rectilinear = 0, Diagonal = 1 };

// Intensity classes of the decoy-state source. Vacuum pulses are prepared
// with mean photon number 0 by convention.
enum class IntensityClass : uint8_t { Signal = 0, Decoy = 1, Vacuum = 2 };

struct PhotonPulse {
    uint64_t round_id = 0;
    uint8_t bit = 0; // encoded key bit, 0 or 1
    Basis basis = Basis::Rectilinear;
    uint32_t photon_count = 0;
    IntensityClass intensity = IntensityClass::Signal;
};

struct ChannelParams {
    double transmittance = 1.0;       // per-photon survival probability, (0, 1]
    double depolarize_prob = 0.0;     // per-pulse bit flip probability, [0, 0.5]
    double dark_count_prob = 0.0;     // spurious click probability on empty arrivals, [0, 1)
    double detector_efficiency = 1.0; // click probability given >= 1 photon, (0, 1]
    double timing_jitter_ns = 0.0;    // std dev of click timing, >= 0; telemetry only

    void validate() const; // throws std::invalid_argument on out-of-range values
};

struct DetectionOutcome {
    bool clicked = false;
    uint8_t bit = 0;
    Basis measured_basis = Basis::Rectilinear;

    static DetectionOutcome no_click() { return {}; }
    static DetectionOutcome click(uint8_t b, Basis basis) { return {true, b, basis}; }
};

// Draws the photon number of a weak coherent pulse from Poisson(mean).
PhotonPulse prepare_pulse(uint8_t bit, Basis basis, double mean_photon_number,
                          IntensityClass intensity, RngStream& rng, uint64_t round_id = 0);

// Applies per-photon loss, then flips the encoded bit of a surviving pulse
// with probability depolarize_prob.
PhotonPulse transmit(const PhotonPulse& pulse, const ChannelParams& channel, RngStream& rng);

// Bob's detection. Empty arrivals click only via dark counts (with a uniform
// random bit); occupied arrivals click with probability detector_efficiency
// and obey the basis-match measurement rule.
DetectionOutcome measure(const PhotonPulse& arrival, Basis bob_basis,
                         const ChannelParams& channel, RngStream& rng);

} // namespace qrt
