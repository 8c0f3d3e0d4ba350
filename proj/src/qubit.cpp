#include "qrt/qubit.hpp"

#include <stdexcept>

namespace qrt {

void ChannelParams::validate() const {
    if (!(transmittance > 0.0 && transmittance <= 1.0))
        throw std::invalid_argument("channel: transmittance must be in (0, 1]");
    if (!(depolarize_prob >= 0.0 && depolarize_prob <= 0.5))
        throw std::invalid_argument("channel: depolarize_prob must be in [0, 0.5]");
    if (!(dark_count_prob >= 0.0 && dark_count_prob < 1.0))
        throw std::invalid_argument("channel: dark_count_prob must be in [0, 1)");
    if (!(detector_efficiency > 0.0 && detector_efficiency <= 1.0))
        throw std::invalid_argument("channel: detector_efficiency must be in (0, 1]");
    if (!(timing_jitter_ns >= 0.0))
        throw std::invalid_argument("channel: timing_jitter_ns must be >= 0");
}

PhotonPulse prepare_pulse(uint8_t bit, Basis basis, double mean_photon_number,
                          IntensityClass intensity, RngStream& rng, uint64_t round_id) {
    if (!(mean_photon_number >= 0.0) || !std::isfinite(mean_photon_number))
        throw std::invalid_argument("prepare_pulse: mean photon number must be finite and >= 0");
    if (bit > 1) throw std::invalid_argument("prepare_pulse: bit must be 0 or 1");
    PhotonPulse p;
    p.round_id = round_id;
    p.bit = bit;
    p.basis = basis;
    p.photon_count = rng.poisson(mean_photon_number);
    p.intensity = intensity;
    return p;
}

PhotonPulse transmit(const PhotonPulse& pulse, const ChannelParams& channel, RngStream& rng) {
    channel.validate();
    PhotonPulse out = pulse;
    uint32_t survivors = 0;
    for (uint32_t i = 0; i < pulse.photon_count; ++i)
        if (rng.bernoulli(channel.transmittance)) ++survivors;
    out.photon_count = survivors;
    if (survivors >= 1 && rng.bernoulli(channel.depolarize_prob)) out.bit ^= 1;
    return out;
}

DetectionOutcome measure(const PhotonPulse& arrival, Basis bob_basis,
                         const ChannelParams& channel, RngStream& rng) {
    channel.validate();
    if (arrival.photon_count == 0) {
        if (rng.bernoulli(channel.dark_count_prob))
            return DetectionOutcome::click(rng.bit(), bob_basis);
        return DetectionOutcome::no_click();
    }
    if (!rng.bernoulli(channel.detector_efficiency)) return DetectionOutcome::no_click();
    if (bob_basis == arrival.basis) return DetectionOutcome::click(arrival.bit, bob_basis);
    return DetectionOutcome::click(rng.bit(), bob_basis);
}

} // namespace qrt
