#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qrt/adversary.hpp"
#include "qrt/postproc.hpp"
#include "qrt/qubit.hpp"
#include "qrt/rng.hpp"

namespace qrt {

struct SessionConfig {
    uint64_t n_rounds = 10000;
    double mu_signal = 0.5;
    double mu_decoy = 0.1; // vacuum pulses always use mean photon number 0
    bool decoy_enabled = true;
    std::array<double, 3> intensity_probs = {0.7, 0.2, 0.1}; // signal, decoy, vacuum
    double basis_prob = 0.5;           // P(Rectilinear), both parties
    double qber_abort_threshold = 0.11;
    double sample_fraction = 0.25;     // fraction of sifted bits revealed, (0, 0.5]
    uint64_t pa_safety_bits = 30;
    int reconcile_passes = 6;
    double decoy_tolerance_sigmas = 3.0;
    PostProcessingOptions postproc;    // forwarded to the classical-channel verifier

    void validate() const;
};

enum class AbortReason : uint8_t { None = 0, QberExceeded, DecoyAnomaly, ReconciliationFailed };

const char* abort_reason_name(AbortReason r);

struct RoundRecord {
    uint8_t alice_bit = 0;
    Basis alice_basis = Basis::Rectilinear;
    IntensityClass intensity = IntensityClass::Signal;
    bool eve_touched = false;
    Basis bob_basis = Basis::Rectilinear; // recorded (possibly fault-corrupted) basis
    DetectionOutcome outcome;
    uint32_t arrived_photons = 0;
};

struct Transcript {
    std::vector<RoundRecord> rounds;
    std::vector<uint32_t> sifted_indices;
    std::vector<uint32_t> revealed_indices; // subset of sifted_indices
    std::vector<std::vector<uint8_t>> parity_messages; // encoded reconciliation frames
    std::optional<Bits> alice_final_key;
    std::optional<Bits> bob_final_key;
    AbortReason abort_reason = AbortReason::None;
};

struct Telemetry {
    uint64_t session_id = 0;
    uint64_t seed = 0;
    double sift_ratio = 0.0;
    std::optional<double> qber_estimate; // absent when no bits were revealed
    double gain_signal = 0.0;
    double gain_decoy = 0.0;
    double gain_vacuum = 0.0;
    double click_rate_rect = 0.0;
    double click_rate_diag = 0.0;
    double dark_rate_estimate = 0.0; // clicks on empty arrivals / empty arrivals
    double timing_variance = 0.0;
    bool decoy_used = false;
    // raw counters per intensity class, in Signal/Decoy/Vacuum order
    std::array<uint64_t, 3> pulses = {0, 0, 0};
    std::array<uint64_t, 3> clicks = {0, 0, 0};
};

// CSV column order is part of the external interface:
// session_id, seed, sift_ratio, qber, gain_signal, gain_decoy, gain_vacuum,
// click_rect, click_diag, dark_rate, timing_var
std::string telemetry_csv_header();
std::string telemetry_csv_row(const Telemetry& t);

struct IntensityStats {
    uint64_t pulses = 0;
    uint64_t clicks = 0;
};

struct DecoyAnalysis {
    double y0_estimate = 0.0;      // vacuum yield
    double y1_lower_bound = 0.0;   // single-photon yield, two-intensity bound
    double e1_upper_bound = 0.0;   // single-photon error bound
    bool pns_suspected = false;
    double decoy_gain_observed = 0.0;
    double decoy_gain_predicted = 0.0; // from the signal gain under a Poisson channel
    double deviation_sigmas = 0.0;
};

// Flags photon-number splitting when the decoy gain deviates from the
// Poisson-consistent prediction inferred from the signal gain by more than
// tolerance_sigmas binomial standard deviations. Requires at least 100 pulses
// per intensity class.
DecoyAnalysis decoy_estimate(const std::map<IntensityClass, IntensityStats>& gains,
                             double mu_signal, double mu_decoy, double qber_estimate = 0.0,
                             double tolerance_sigmas = 3.0);

// Indices kept by basis reconciliation: click and matching bases.
std::vector<uint32_t> sift(const std::vector<Basis>& alice_bases,
                           const std::vector<Basis>& bob_bases,
                           const std::vector<DetectionOutcome>& outcomes);

struct QberEstimate {
    std::optional<double> qber;              // absent when nothing could be revealed
    std::vector<uint32_t> revealed_positions; // ascending positions into the sifted key
};

QberEstimate estimate_qber(const Bits& alice_sifted, const Bits& bob_sifted,
                           double sample_fraction, RngStream& rng);

struct ReconciliationResult {
    bool success = false;
    Bits shared_key;
    uint64_t leaked_bits = 0;
    std::vector<DialogueMessage> messages;
};

ReconciliationResult error_correct(const Bits& alice_key, const Bits& bob_key,
                                   double qber_hint, int passes = 6);

double binary_entropy(double q);
// floor(n (1 - h2(qber)) - leaked_bits - safety_bits); non-positive means the
// session cannot distill a key.
int64_t pa_output_length(size_t n, double qber, uint64_t leaked_bits, uint64_t safety_bits);

// Toeplitz universal hashing with seeded diagonal bits; returns the empty key
// when the output length is non-positive.
Bits privacy_amplify(const Bits& shared_key, uint64_t leaked_bits, double qber,
                     uint64_t safety_bits, RngStream& rng);

struct RandomnessVerdict {
    double monobit_z = 0.0;
    double runs_z = 0.0;
    bool monobit_pass = false;
    bool runs_pass = false;
    bool pass = false;
};

// Monobit and runs tests at significance 0.01 (two-sided z threshold 2.5758).
// Keys shorter than 100 bits are rejected as invalid input.
RandomnessVerdict test_key_randomness(const Bits& key);

struct SessionResult {
    Transcript transcript;
    Telemetry telemetry;
    EveRecord eve;
    std::optional<DecoyAnalysis> decoy;
    double qber_sifted_true = 0.0; // mismatch fraction over all sifted bits
    uint64_t leaked_bits = 0;
};

// One full protocol session. The adversary may be null (absent) and must not
// be Adaptive unless the caller accepts a uniform one-shot arm choice.
// Abort evaluation order: QBER threshold, then decoy anomaly, then
// reconciliation and privacy amplification failures.
SessionResult run_session(const SessionConfig& config, const ChannelParams& channel,
                          const AdversaryStrategy* adversary, uint64_t seed,
                          uint64_t session_id = 0);

// Self-contained classical-channel replay fixture built from a completed
// session, used as the fuzzing substrate.
struct PostProcessingFixture {
    BobSessionContext ctx;
    Bits alice_kept_key; // Alice's sifted key minus the revealed sample
    std::vector<std::vector<uint8_t>> dialogue;
};

PostProcessingFixture make_postprocessing_fixture(const SessionConfig& config,
                                                  const Transcript& transcript);

} // namespace qrt
