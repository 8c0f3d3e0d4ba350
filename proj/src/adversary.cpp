#include "qrt/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qrt {

void AdversaryStrategy::validate() const {
    if (auto* ir = std::get_if<InterceptResend>(&kind)) {
        if (!(ir->fraction >= 0.0 && ir->fraction <= 1.0))
            throw std::invalid_argument("intercept_resend: fraction must be in [0, 1]");
    } else if (auto* pns = std::get_if<PhotonNumberSplit>(&kind)) {
        if (!(pns->block_prob >= 0.0 && pns->block_prob <= 1.0))
            throw std::invalid_argument("pns: block_prob must be in [0, 1]");
    } else if (auto* f = std::get_if<FaultInject>(&kind)) {
        if (!(f->rate >= 0.0 && f->rate <= 1.0))
            throw std::invalid_argument("fault_inject: rate must be in [0, 1]");
    } else if (auto* a = std::get_if<Adaptive>(&kind)) {
        if (a->arms.empty()) throw std::invalid_argument("adaptive: arms must be non-empty");
        if (!(a->epsilon > 0.0 && a->epsilon < 1.0))
            throw std::invalid_argument("adaptive: epsilon must be in (0, 1)");
        for (const auto& arm : a->arms) {
            if (arm.is_adaptive())
                throw std::invalid_argument("adaptive: arms must be concrete strategies");
            arm.validate();
        }
    }
}

InterceptResult intercept_resend(const PhotonPulse& pulse, double fraction,
                                 BasisPolicy policy, RngStream& rng) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw std::invalid_argument("intercept_resend: fraction must be in [0, 1]");
    InterceptResult r;
    r.forwarded = pulse;
    if (!rng.bernoulli(fraction) || pulse.photon_count == 0) return r;

    Basis eb = (policy == BasisPolicy::FixedRectilinear)
                   ? Basis::Rectilinear
                   : (rng.bit() ? Basis::Diagonal : Basis::Rectilinear);
    uint8_t measured = (eb == pulse.basis) ? pulse.bit : rng.bit();

    r.entry.touched = true;
    r.entry.eve_basis = eb;
    r.entry.eve_bit = measured;
    r.forwarded.bit = measured;
    r.forwarded.basis = eb;
    r.forwarded.photon_count = 1; // fresh single-photon re-preparation
    return r;
}

InterceptResult pns_attack(const PhotonPulse& pulse, double block_prob, RngStream& rng) {
    if (!(block_prob >= 0.0 && block_prob <= 1.0))
        throw std::invalid_argument("pns: block_prob must be in [0, 1]");
    InterceptResult r;
    r.forwarded = pulse;
    r.lossless = true; // Eve has replaced the fiber with a lossless link
    if (pulse.photon_count >= 2) {
        r.entry.touched = true;
        r.entry.eve_bit = pulse.bit; // resolved once bases are announced
        r.entry.photons_stolen = 1;
        r.forwarded.photon_count = pulse.photon_count - 1;
    } else if (pulse.photon_count == 1) {
        if (rng.bernoulli(block_prob)) {
            r.entry.touched = true;
            r.forwarded.photon_count = 0;
        }
    }
    return r;
}

double gain_compensating_block_prob(double mu, const ChannelParams& channel) {
    if (!(mu > 0.0)) throw std::invalid_argument("block_prob: mu must be > 0");
    channel.validate();
    double b = (std::exp(mu * (1.0 - channel.transmittance)) - 1.0) / mu;
    return std::clamp(b, 0.0, 1.0);
}

DetectionOutcome fault_inject(const DetectionOutcome& outcome, const FaultInject& f,
                              RngStream& rng, bool& perturbed) {
    perturbed = false;
    if (f.fault != FaultKind::DetectorBlind || !outcome.clicked) return outcome;
    if (rng.bernoulli(f.rate)) {
        perturbed = true;
        return DetectionOutcome::no_click();
    }
    return outcome;
}

Basis fault_inject(Basis recorded_basis, const FaultInject& f, RngStream& rng, bool& perturbed) {
    perturbed = false;
    if (f.fault != FaultKind::BasisFlip) return recorded_basis;
    if (rng.bernoulli(f.rate)) {
        perturbed = true;
        return recorded_basis == Basis::Rectilinear ? Basis::Diagonal : Basis::Rectilinear;
    }
    return recorded_basis;
}

AdversaryEngine::AdversaryEngine(const AdversaryStrategy* strategy) : strategy_(strategy) {
    if (strategy_ && strategy_->is_none()) strategy_ = nullptr;
    if (strategy_) {
        if (strategy_->is_adaptive())
            throw std::invalid_argument("adversary engine: adaptive strategy must be resolved to an arm");
        strategy_->validate();
    }
}

void AdversaryEngine::begin_round(uint64_t) { record_.rounds.emplace_back(); }

PhotonPulse AdversaryEngine::on_pulse(const PhotonPulse& pulse, RngStream& rng, bool& lossless) {
    lossless = false;
    if (!strategy_) return pulse;
    EveRoundRecord& entry = record_.rounds.back();
    if (auto* ir = std::get_if<InterceptResend>(&strategy_->kind)) {
        InterceptResult r = intercept_resend(pulse, ir->fraction, ir->basis_policy, rng);
        entry = r.entry;
        return r.forwarded;
    }
    if (auto* pns = std::get_if<PhotonNumberSplit>(&strategy_->kind)) {
        InterceptResult r = pns_attack(pulse, pns->block_prob, rng);
        entry = r.entry;
        lossless = r.lossless;
        return r.forwarded;
    }
    return pulse;
}

Basis AdversaryEngine::on_recorded_basis(Basis basis, RngStream& rng) {
    if (!strategy_) return basis;
    if (auto* f = std::get_if<FaultInject>(&strategy_->kind)) {
        bool perturbed = false;
        Basis b = fault_inject(basis, *f, rng, perturbed);
        if (perturbed) record_.rounds.back().touched = true;
        return b;
    }
    return basis;
}

DetectionOutcome AdversaryEngine::on_outcome(const DetectionOutcome& outcome, RngStream& rng) {
    if (!strategy_) return outcome;
    if (auto* f = std::get_if<FaultInject>(&strategy_->kind)) {
        bool perturbed = false;
        DetectionOutcome o = fault_inject(outcome, *f, rng, perturbed);
        if (perturbed) record_.rounds.back().touched = true;
        return o;
    }
    return outcome;
}

size_t adapt_strategy(const std::vector<ArmObservation>& history, size_t arm_count,
                      double epsilon, RngStream& rng) {
    if (arm_count == 0) throw std::invalid_argument("adapt_strategy: arm_count must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::invalid_argument("adapt_strategy: epsilon must be in (0, 1)");
    if (history.empty()) return size_t(rng.below(arm_count));
    if (rng.bernoulli(epsilon)) return size_t(rng.below(arm_count));

    std::vector<double> sum(arm_count, 0.0);
    std::vector<uint64_t> n(arm_count, 0);
    for (const auto& obs : history) {
        if (obs.arm_index >= arm_count)
            throw std::invalid_argument("adapt_strategy: history references unknown arm");
        sum[obs.arm_index] += obs.reward;
        ++n[obs.arm_index];
    }
    size_t best = 0;
    double best_mean = n[0] ? sum[0] / double(n[0]) : 0.0;
    for (size_t a = 1; a < arm_count; ++a) {
        double mean = n[a] ? sum[a] / double(n[a]) : 0.0;
        if (mean > best_mean) {
            best = a;
            best_mean = mean;
        }
    }
    return best;
}

double adversary_reward(double eve_known_fraction, bool session_aborted,
                        double info_gain_weight, double detection_penalty_weight) {
    return info_gain_weight * eve_known_fraction -
           detection_penalty_weight * (session_aborted ? 1.0 : 0.0);
}

} // namespace qrt
