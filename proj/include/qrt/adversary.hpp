#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "qrt/qubit.hpp"
#include "qrt/rng.hpp"

namespace qrt {

struct NoAdversary {};

enum class BasisPolicy : uint8_t { RandomBasis = 0, FixedRectilinear = 1 };

// Measure-and-resend on a fraction of pulses. The forwarded pulse is a fresh
// single photon encoding Eve's measurement result in her basis.
struct InterceptResend {
    double fraction = 1.0; // [0, 1]
    BasisPolicy basis_policy = BasisPolicy::RandomBasis;
};

// Photon-number splitting. Eve owns the line: multi-photon pulses lose one
// photon to her and the remainder travels a lossless channel; single photons
// are blocked with probability block_prob.
struct PhotonNumberSplit {
    double block_prob = 0.0; // [0, 1]
};

enum class FaultKind : uint8_t { DetectorBlind = 0, BasisFlip = 1 };

// Hardware-level sabotage. DetectorBlind suppresses clicks; BasisFlip
// corrupts Bob's recorded measurement basis.
struct FaultInject {
    FaultKind fault = FaultKind::DetectorBlind;
    double rate = 0.0; // [0, 1]
};

struct AdversaryStrategy;

// Bandit-driven selection over concrete strategies, one arm per session.
// Arms must not nest another Adaptive.
struct Adaptive {
    std::vector<AdversaryStrategy> arms;
    double epsilon = 0.1;                  // exploration probability, (0, 1)
    double info_gain_weight = 1.0;         // reward weight on Eve's known key fraction
    double detection_penalty_weight = 1.0; // reward penalty when the session aborts
};

struct AdversaryStrategy {
    std::variant<NoAdversary, InterceptResend, PhotonNumberSplit, FaultInject, Adaptive> kind;

    AdversaryStrategy() : kind(NoAdversary{}) {}
    template <class T>
    AdversaryStrategy(T v) : kind(std::move(v)) {}

    bool is_none() const { return std::holds_alternative<NoAdversary>(kind); }
    bool is_adaptive() const { return std::holds_alternative<Adaptive>(kind); }
    void validate() const; // throws std::invalid_argument
};

// Ground truth about Eve's interaction with one round.
struct EveRoundRecord {
    bool touched = false;
    std::optional<Basis> eve_basis;
    std::optional<uint8_t> eve_bit;
    uint32_t photons_stolen = 0;
};

struct EveRecord {
    std::vector<EveRoundRecord> rounds;
};

struct InterceptResult {
    PhotonPulse forwarded;
    EveRoundRecord entry;
    bool lossless = false; // forwarded pulse bypasses the lossy channel
};

InterceptResult intercept_resend(const PhotonPulse& pulse, double fraction,
                                 BasisPolicy policy, RngStream& rng);
InterceptResult pns_attack(const PhotonPulse& pulse, double block_prob, RngStream& rng);

// block_prob that holds the signal-class gain at its no-attack value:
// (e^{mu (1 - t)} - 1) / mu, clamped to [0, 1]. Independent of detector
// efficiency and dark rate for a pulse-level detector.
double gain_compensating_block_prob(double mu, const ChannelParams& channel);

// Fault application points. Each overload draws exactly one coin when its
// fault kind matches and leaves the input untouched otherwise.
DetectionOutcome fault_inject(const DetectionOutcome& outcome, const FaultInject& f,
                              RngStream& rng, bool& perturbed);
Basis fault_inject(Basis recorded_basis, const FaultInject& f, RngStream& rng, bool& perturbed);

// Per-session adversary driver used by run_session. A passive engine (None or
// absent strategy) consumes no randomness, so telemetry is bit-identical to
// an adversary-free run.
class AdversaryEngine {
public:
    // strategy may be nullptr (absent). Adaptive must be resolved by the
    // caller to a concrete arm first.
    explicit AdversaryEngine(const AdversaryStrategy* strategy);

    void begin_round(uint64_t round_id);
    PhotonPulse on_pulse(const PhotonPulse& pulse, RngStream& rng, bool& lossless);
    Basis on_recorded_basis(Basis basis, RngStream& rng);
    DetectionOutcome on_outcome(const DetectionOutcome& outcome, RngStream& rng);

    const EveRecord& record() const { return record_; }
    EveRecord take_record() { return std::move(record_); }

private:
    const AdversaryStrategy* strategy_;
    EveRecord record_;
};

struct ArmObservation {
    size_t arm_index = 0;
    double reward = 0.0;
};

// Epsilon-greedy arm selection. Empty history explores uniformly; otherwise
// an epsilon coin picks between uniform exploration and the empirical-mean
// argmax (ties and unseen arms resolve to the lowest index, unseen arms carry
// a prior mean of 0).
size_t adapt_strategy(const std::vector<ArmObservation>& history, size_t arm_count,
                      double epsilon, RngStream& rng);

// Session-level reward for the adaptive adversary.
double adversary_reward(double eve_known_fraction, bool session_aborted,
                        double info_gain_weight, double detection_penalty_weight);

class EpsilonGreedyBandit {
public:
    EpsilonGreedyBandit(size_t arm_count, double epsilon)
        : arm_count_(arm_count), epsilon_(epsilon) {}

    size_t select(RngStream& rng) const { return adapt_strategy(history_, arm_count_, epsilon_, rng); }
    void observe(size_t arm, double reward) { history_.push_back({arm, reward}); }
    const std::vector<ArmObservation>& history() const { return history_; }

private:
    size_t arm_count_;
    double epsilon_;
    std::vector<ArmObservation> history_;
};

} // namespace qrt
