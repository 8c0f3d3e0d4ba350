// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the process exit code is the number of failed criteria. Expected
// values marked as frozen were computed once from closed-form models and are
// asserted verbatim so regressions cannot drift past them.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "qrt/adversary.hpp"
#include "qrt/anomaly.hpp"
#include "qrt/bb84.hpp"
#include "qrt/campaign.hpp"
#include "qrt/fuzzer.hpp"
#include "qrt/postproc.hpp"
#include "qrt/qubit.hpp"
#include "qrt/rng.hpp"
#include "qrt/sidechannel.hpp"
#include "qrt/state_anchor.hpp"

using namespace qrt;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const char* fmt, ...) {
    char detail[512];
    va_list args;
    va_start(args, fmt);
    vsnprintf(detail, sizeof(detail), fmt, args);
    va_end(args);
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail);
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

Bits random_bits(size_t n, uint64_t seed) {
    RngStream rng(seed);
    Bits b(n);
    for (auto& x : b) x = uint8_t(rng.bit());
    return b;
}

// Bright-source session profile: every pulse clicks, so the sift ratio is the
// basis-match rate and abort decisions depend only on the error statistics.
SessionConfig bright_config(uint64_t n_rounds) {
    SessionConfig cfg;
    cfg.n_rounds = n_rounds;
    cfg.decoy_enabled = false;
    cfg.mu_signal = 16.0;
    return cfg;
}

// Exhaustive enumeration of one intercepted-and-sifted round: Alice's basis,
// Eve's basis, Eve's measured bit and Bob's measured bit, each branch carrying
// its exact probability. Returns P(bob_bit != alice_bit | sifted).
double intercept_resend_error_oracle() {
    double error = 0.0;
    double total = 0.0;
    for (int alice_bit = 0; alice_bit < 2; ++alice_bit) {
        for (int alice_basis = 0; alice_basis < 2; ++alice_basis) {
            for (int eve_basis = 0; eve_basis < 2; ++eve_basis) {
                for (int eve_bit = 0; eve_bit < 2; ++eve_bit) {
                    const double p_eve = (eve_basis == alice_basis)
                                             ? (eve_bit == alice_bit ? 1.0 : 0.0)
                                             : 0.5;
                    if (p_eve == 0.0) continue;
                    // Bob measures Eve's resent state in Alice's basis (sifted)
                    for (int bob_bit = 0; bob_bit < 2; ++bob_bit) {
                        const double p_bob = (eve_basis == alice_basis)
                                                 ? (bob_bit == eve_bit ? 1.0 : 0.0)
                                                 : 0.5;
                        if (p_bob == 0.0) continue;
                        const double w = 0.25 * 0.5 * 0.5 * p_eve * p_bob;
                        total += w;
                        if (bob_bit != alice_bit) error += w;
                    }
                }
            }
        }
    }
    return error / total;
}

void criterion1_intercept_resend_qber() {
    const double oracle = intercept_resend_error_oracle();
    bool ok = std::abs(oracle - 0.25) < 1e-12;

    double q_full = 0.0, q_half = 0.0;
    {
        AdversaryStrategy eve(InterceptResend{1.0, BasisPolicy::RandomBasis});
        const SessionResult r = run_session(bright_config(50000), ChannelParams{}, &eve, 101, 1);
        ok = ok && r.transcript.sifted_indices.size() >= 20000;
        q_full = r.qber_sifted_true;
    }
    {
        AdversaryStrategy eve(InterceptResend{0.5, BasisPolicy::RandomBasis});
        const SessionResult r = run_session(bright_config(50000), ChannelParams{}, &eve, 102, 2);
        ok = ok && r.transcript.sifted_indices.size() >= 20000;
        q_half = r.qber_sifted_true;
    }
    ok = ok && q_full >= 0.24 && q_full <= 0.26;
    ok = ok && q_half >= 0.115 && q_half <= 0.135;
    report(1, ok,
           "intercept-resend qber: enumeration oracle %.6f (expect 0.2500), "
           "simulated full %.4f in [0.24,0.26], half %.4f in [0.115,0.135]",
           oracle, q_full, q_half);
}

void criterion2_honest_sessions() {
    const SessionConfig cfg = bright_config(100000);
    int aborts = 0, key_mismatches = 0, ratio_out = 0;
    for (int i = 0; i < 100; ++i) {
        const SessionResult r =
            run_session(cfg, ChannelParams{}, nullptr, derive_seed(201, i), 100 + i);
        if (r.transcript.abort_reason != AbortReason::None) ++aborts;
        if (!r.transcript.alice_final_key || !r.transcript.bob_final_key ||
            *r.transcript.alice_final_key != *r.transcript.bob_final_key ||
            r.transcript.alice_final_key->empty())
            ++key_mismatches;
        if (r.telemetry.sift_ratio < 0.49 || r.telemetry.sift_ratio > 0.51) ++ratio_out;
    }
    const bool ok = aborts == 0 && key_mismatches == 0 && ratio_out == 0;
    report(2, ok,
           "100 noiseless sessions at 1e5 rounds: %d aborts, %d key mismatches, "
           "%d sift ratios outside [0.49,0.51]",
           aborts, key_mismatches, ratio_out);
}

void criterion3_interception_always_aborts() {
    SessionConfig cfg = bright_config(20000);
    cfg.qber_abort_threshold = 0.11;
    AdversaryStrategy eve(InterceptResend{1.0, BasisPolicy::RandomBasis});
    int aborted = 0;
    uint64_t min_revealed = UINT64_MAX;
    for (int i = 0; i < 100; ++i) {
        const SessionResult r =
            run_session(cfg, ChannelParams{}, &eve, derive_seed(301, i), 300 + i);
        if (r.transcript.abort_reason == AbortReason::QberExceeded) ++aborted;
        min_revealed = std::min(min_revealed, uint64_t(r.transcript.revealed_indices.size()));
    }
    const bool ok = aborted == 100 && min_revealed >= 2000;
    report(3, ok,
           "full interception at threshold 0.11: %d/100 sessions aborted, "
           "min revealed sample %" PRIu64 " (need >= 2000)",
           aborted, min_revealed);
}

void criterion4_decoy_catches_compensated_pns() {
    SessionConfig cfg;
    cfg.n_rounds = 30000;
    cfg.mu_signal = 0.5;
    cfg.mu_decoy = 0.1;
    cfg.decoy_enabled = true;
    cfg.intensity_probs = {0.55, 0.30, 0.15};
    ChannelParams channel;
    channel.transmittance = 0.25;

    const double block = gain_compensating_block_prob(cfg.mu_signal, channel);
    AdversaryStrategy eve(PhotonNumberSplit{block});

    int flagged = 0;
    for (int i = 0; i < 100; ++i) {
        const SessionResult r = run_session(cfg, channel, &eve, derive_seed(401, i), 400 + i);
        if (r.decoy && r.decoy->pns_suspected) ++flagged;
    }
    int false_flags = 0;
    for (int i = 0; i < 100; ++i) {
        const SessionResult r = run_session(cfg, channel, nullptr, derive_seed(451, i), 450 + i);
        if (r.decoy && r.decoy->pns_suspected) ++false_flags;
    }
    const bool ok = flagged >= 95 && false_flags <= 5;
    report(4, ok,
           "gain-compensated pns (block %.4f): flagged %d/100 attacked (need >= 95), "
           "%d/100 honest false flags (allow <= 5)",
           block, flagged, false_flags);
}

void criterion5_reconciliation_and_pa_budget() {
    int failures = 0;
    for (int i = 0; i < 100; ++i) {
        const uint64_t seed = derive_seed(501, i);
        const Bits alice = random_bits(4096, seed);
        Bits bob = alice;
        RngStream rng(derive_seed(501, i, 1));
        std::vector<uint32_t> idx(4096);
        for (uint32_t j = 0; j < 4096; ++j) idx[j] = j;
        rng.shuffle(idx);
        for (int j = 0; j < 327; ++j) bob[idx[j]] ^= 1; // 327/4096 = 7.98% errors

        const ReconciliationResult rec = error_correct(alice, bob, 0.08);
        if (!rec.success || rec.shared_key != alice) {
            ++failures;
            continue;
        }
        RngStream pa_rng(derive_seed(501, i, 2));
        const Bits out = privacy_amplify(rec.shared_key, rec.leaked_bits, 0.08, 30, pa_rng);
        const int64_t budget = pa_output_length(4096, 0.08, rec.leaked_bits, 30);
        const int64_t expect = budget > 0 ? budget : 0;
        if (int64_t(out.size()) != expect) ++failures;
        if (int64_t(out.size()) > 4096 - int64_t(rec.leaked_bits)) ++failures;
    }
    report(5, failures == 0,
           "cascade at 8%% errors on 4096-bit keys: %d/100 trials met correction "
           "and the leakage budget",
           100 - failures);
}

void criterion6_pa_collision_rate() {
    // two distinct 64-bit keys hashed to 8 bits by one seeded Toeplitz matrix;
    // universality puts the collision rate at 2^-8, binomial 3-sigma over 1e4
    // trials is [21, 57] around the mean 39.06
    int collisions = 0;
    for (int i = 0; i < 10000; ++i) {
        const Bits a = random_bits(64, derive_seed(601, i, 0));
        Bits b = random_bits(64, derive_seed(601, i, 1));
        if (a == b) b[0] ^= 1;
        RngStream ra(derive_seed(602, i));
        RngStream rb(derive_seed(602, i));
        const Bits ha = privacy_amplify(a, 26, 0.0, 30, ra);
        const Bits hb = privacy_amplify(b, 26, 0.0, 30, rb);
        if (ha.size() != 8 || hb.size() != 8) {
            collisions = -1;
            break;
        }
        if (ha == hb) ++collisions;
    }
    const bool ok = collisions >= 21 && collisions <= 57;
    report(6, ok, "8-bit hash collisions over 1e4 key pairs: %d (3-sigma band [21, 57])",
           collisions);
}

void criterion7_randomness_tests() {
    const RandomnessVerdict zeros = test_key_randomness(Bits(1024, 0));
    Bits alternating(1024);
    for (size_t i = 0; i < alternating.size(); ++i) alternating[i] = uint8_t(i % 2);
    const RandomnessVerdict alt = test_key_randomness(alternating);

    int passed = 0;
    for (int i = 0; i < 100; ++i)
        if (test_key_randomness(random_bits(1024, derive_seed(701, i))).pass) ++passed;

    const bool ok = !zeros.pass && !alt.pass && passed >= 99;
    report(7, ok,
           "randomness gate: all-zero %s, alternating %s, uniform keys %d/100 pass "
           "(need >= 99)",
           zeros.pass ? "accepted" : "rejected", alt.pass ? "accepted" : "rejected", passed);
}

void criterion8_fuzzer_replay_and_recall() {
    // bit-identical reconstruction from (master seed, case index) alone
    bool replay_ok = true;
    {
        PostProcessingOptions bug;
        bug.bug_skip_digest_length_check = true;
        const FuzzTarget target = make_stressed_fuzz_target(17, bug);
        const auto hit = fuzz_until_violation(target, 10000, 811);
        replay_ok = hit.has_value();
        if (replay_ok) {
            const auto stored = apply_case(target, hit->fc);
            auto rebuilt = target.base_dialogue;
            RngStream rng(derive_seed(811, hit->fc.case_id));
            mutate(rebuilt, rng);
            replay_ok = rebuilt == stored &&
                        evaluate_dialogue(target, rebuilt) == hit->verdict;
        }
    }

    // each planted bug is found within 1e4 cases for at least 9 of 10 seeds;
    // the digest bug must additionally show its signature verdict (an accepted
    // wrong key), not just a divergence from the reference verifier
    int found[3] = {0, 0, 0};
    for (int bug = 0; bug < 3; ++bug) {
        PostProcessingOptions opts;
        if (bug == 0) opts.bug_skip_digest_length_check = true;
        if (bug == 1) opts.bug_accept_reordered_parity = true;
        if (bug == 2) opts.bug_pad_truncated_sift = true;
        const FuzzTarget target = make_stressed_fuzz_target(17, opts);
        for (int s = 0; s < 10; ++s) {
            bool hit = false;
            for (const auto& o : fuzz_post_processing(target, 10000, 1000 + s)) {
                if (bug == 0 && o.verdict == FuzzVerdict::KeyMismatchUndetected) hit = true;
                if (bug != 0 && is_invariant_violation(o.verdict)) hit = true;
                if (hit) break;
            }
            if (hit) ++found[bug];
        }
    }

    // an unmodified verifier never produces a violation verdict
    int false_verdicts = 0;
    const FuzzTarget clean = make_stressed_fuzz_target(17);
    for (const auto& o : fuzz_post_processing(clean, 1000, 801))
        if (is_invariant_violation(o.verdict)) ++false_verdicts;

    const bool ok = replay_ok && found[0] >= 9 && found[1] >= 9 && found[2] >= 9 &&
                    false_verdicts == 0;
    report(8, ok,
           "fuzzer: replay %s, bug recall %d/%d/%d of 10 seeds (need >= 9), "
           "%d false verdicts in 1000 clean cases",
           replay_ok ? "bit-identical" : "diverged", found[0], found[1], found[2],
           false_verdicts);
}

void criterion9_detector_flags_and_evasion() {
    SessionConfig cfg;
    cfg.n_rounds = 4000;
    cfg.decoy_enabled = false;
    ChannelParams channel;
    channel.depolarize_prob = 0.01;

    auto collect = [&](const AdversaryStrategy* eve, uint64_t lane,
                       std::vector<FeatureVector>& vecs, std::vector<AbortReason>& aborts) {
        for (int i = 0; i < 100; ++i) {
            const SessionResult r =
                run_session(cfg, channel, eve, derive_seed(lane, i), lane * 1000 + i);
            vecs.push_back(telemetry_features(r.telemetry));
            aborts.push_back(r.transcript.abort_reason);
        }
    };

    std::vector<FeatureVector> train, heldout, attacked;
    std::vector<AbortReason> train_ab, heldout_ab, attacked_ab;
    collect(nullptr, 901, train, train_ab);
    collect(nullptr, 902, heldout, heldout_ab);
    AdversaryStrategy eve(InterceptResend{1.0, BasisPolicy::RandomBasis});
    collect(&eve, 903, attacked, attacked_ab);

    RngStream fit_rng(derive_seed(910, 0));
    const DetectorModel model = fit(train, DetectorKind::Pca, FitParams{}, fit_rng);
    const double threshold = calibrate_alert_threshold(model, heldout);

    int flags = 0, false_alerts = 0;
    for (const auto& v : attacked)
        if (detect(model, v, threshold).anomalous) ++flags;
    for (const auto& v : heldout)
        if (detect(model, v, threshold).anomalous) ++false_alerts;

    int evaded = 0, transcript_changes = 0;
    for (size_t i = 0; i < attacked.size(); ++i) {
        const AbortReason before = attacked_ab[i];
        const EvadeResult ev = evade(model, attacked[i], -1.0);
        if (ev.score < threshold) ++evaded;
        if (attacked_ab[i] != before) ++transcript_changes;
    }

    const bool ok = flags >= 90 && false_alerts <= 8 && evaded == int(attacked.size()) &&
                    transcript_changes == 0;
    report(9, ok,
           "anomaly detector: flagged %d/100 intercepted (need >= 90), %d/100 false "
           "alerts (allow <= 8); evasion beat the threshold on %d/100 probes and "
           "changed %d session outcomes",
           flags, false_alerts, evaded, transcript_changes);
}

void criterion10_side_channel_recovery() {
    auto accuracy_at = [](uint32_t key_bits, double noise, size_t n_traces,
                          uint64_t lane) {
        const Bits key = random_bits(key_bits, derive_seed(lane, 0));
        LeakModel m;
        m.leak_weight = 1.0;
        m.noise_sigma = noise;
        std::vector<Trace> traces;
        traces.reserve(n_traces);
        for (size_t t = 0; t < n_traces; ++t)
            traces.push_back(emit_trace(key, m, derive_seed(lane, 1 + t), t));
        const DpaResult r = dpa_recover(traces, m.samples_per_bit);
        return recovery_accuracy(key, r.recovered);
    };

    // snr 0: no leakage signal at all, the analyzer must hover at chance
    const Bits key0 = random_bits(1024, derive_seed(1001, 0));
    LeakModel zero;
    zero.leak_weight = 0.0;
    zero.noise_sigma = 1.0;
    std::vector<Trace> zero_traces;
    for (size_t t = 0; t < 100; ++t)
        zero_traces.push_back(emit_trace(key0, zero, derive_seed(1001, 1 + t), t));
    const double acc0 = recovery_accuracy(key0, dpa_recover(zero_traces, 4).recovered);

    // snr 5 (leak 1, noise 1/sqrt(5)): 200 traces recover 256-bit keys
    int strong = 0;
    for (int s = 0; s < 100; ++s)
        if (accuracy_at(256, 0.4472135954999579, 200, derive_seed(1010, s)) >= 0.95) ++strong;

    // snr 0.05: accuracy is non-decreasing in the trace count (0.02 slack)
    const double weak_noise = 4.47213595499958;
    double prev = -1.0;
    bool monotone = true;
    double curve[4] = {0, 0, 0, 0};
    const size_t counts[4] = {1, 10, 100, 1000};
    for (int i = 0; i < 4; ++i) {
        curve[i] = accuracy_at(1024, weak_noise, counts[i], derive_seed(1020, i));
        if (curve[i] < prev - 0.02) monotone = false;
        prev = curve[i];
    }

    const bool ok = acc0 >= 0.45 && acc0 <= 0.55 && strong >= 95 && monotone;
    report(10, ok,
           "dpa: snr-0 accuracy %.3f in [0.45,0.55]; snr-5 >= 0.95 on %d/100 seeds "
           "(need >= 95); low-snr curve %.3f/%.3f/%.3f/%.3f monotone %s",
           acc0, strong, curve[0], curve[1], curve[2], curve[3], monotone ? "yes" : "no");
}

void criterion11_attestation_threshold_exhaustive() {
    int bad_forges = 0, missed_honest = 0, boundary_inconsistent = 0;
    const Digest32 fake = make_digest(0xdead);
    const Digest32 honest_digest = make_digest(0xbeef);

    for (uint32_t n = 1; n <= 8; ++n) {
        ValidatorSet set;
        double total = 0.0;
        for (uint32_t i = 0; i < n; ++i) total += double(i + 2);
        for (uint32_t i = 0; i < n; ++i)
            set.members.push_back({i, double(i + 2) / total, SigScheme::PostQuantum,
                                   0xabc00 + i});
        set.validate();

        for (const double tau : {0.70, 0.75, 0.80}) {
            for (uint32_t mask = 1; mask < (1u << n); ++mask) {
                std::vector<uint32_t> ids;
                for (uint32_t i = 0; i < n; ++i)
                    if (mask & (1u << i)) ids.push_back(i);
                const double stake = set.stake_of(ids);

                AdversaryPower adv;
                adv.controlled = ids;
                adv.quantum = true;
                const ForgeResult forge = forge_attempt(adv, set, 50, fake, tau);
                if (stake < tau - 1e-9 && forge.success) ++bad_forges;
                if (stake > tau + 1e-9 && !forge.success) ++missed_honest;
                if (forge.success && !forge.proof) ++boundary_inconsistent;
                if (forge.success && !verify_proof(*forge.proof, set, tau).accepted)
                    ++boundary_inconsistent;

                // honest aggregation over the same subset obeys the same gate
                std::vector<Attestation> atts;
                for (uint32_t id : ids)
                    atts.push_back(attest(*set.find(id), 51, honest_digest));
                const AggregateResult agg = aggregate(atts, set, tau);
                if (stake > tau + 1e-9 &&
                    (!agg.proof || !verify_proof(*agg.proof, set, tau).accepted))
                    ++missed_honest;
                if (stake < tau - 1e-9 && agg.proof) ++bad_forges;
            }
        }
    }

    // all-classical validators fall to a quantum adversary with zero stake
    ValidatorSet classical;
    for (uint32_t i = 0; i < 6; ++i)
        classical.members.push_back({i, 1.0 / 6, SigScheme::Classical, 0xccc00 + i});
    AdversaryPower quantum_only;
    quantum_only.quantum = true;
    int classical_forged = 0;
    for (uint64_t label = 0; label < 5; ++label)
        if (forge_attempt(quantum_only, classical, 60 + label, make_digest(7000 + label), 0.80)
                .success)
            ++classical_forged;

    std::vector<StoredPayload> stored{{1, 9, SigScheme::Classical, "k1"},
                                      {2, 9, SigScheme::PostQuantum, "k2"},
                                      {3, 9, SigScheme::Classical, "k3"}};
    const auto retro = retro_decrypt(stored, quantum_only);
    const bool retro_ok = retro.size() == 3 && retro[0].compromised &&
                          !retro[1].compromised && retro[2].compromised;

    const bool ok = bad_forges == 0 && missed_honest == 0 && boundary_inconsistent == 0 &&
                    classical_forged == 5 && retro_ok;
    report(11, ok,
           "attestation thresholds (n <= 8, exhaustive): %d sub-threshold forgeries, "
           "%d missed honest proofs, %d inconsistencies; classical set forged %d/5 "
           "digests; retro-decrypt %s",
           bad_forges, missed_honest, boundary_inconsistent, classical_forged,
           retro_ok ? "exact" : "wrong");
}

void criterion12_bandit_convergence() {
    const double means[4] = {0.1, 0.9, 0.1, 0.1};
    EpsilonGreedyBandit bandit(4, 0.1);
    RngStream rng(1201);
    int dominant_in_tail = 0;
    for (int round = 0; round < 1000; ++round) {
        const size_t arm = bandit.select(rng);
        const double reward = rng.bernoulli(means[arm]) ? 1.0 : 0.0;
        bandit.observe(arm, reward);
        if (round >= 800 && arm == 1) ++dominant_in_tail;
    }
    const bool ok = dominant_in_tail >= 170;
    report(12, ok, "epsilon-greedy bandit: dominant arm chosen %d/200 of final rounds "
           "(need >= 170)", dominant_in_tail);
}

void criterion13_cli_determinism() {
#if defined(QRT_BIN) && defined(QRT_SMOKE_CONFIG)
    auto slurp = [](const char* path) -> std::optional<std::string> {
        std::ifstream in(path, std::ios::binary);
        if (!in) return std::nullopt;
        std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return s;
    };
    const std::string base = std::string(QRT_BIN) + " run --config " + QRT_SMOKE_CONFIG +
                             " --seed 7 --format json --out ";
    const int rc_a = std::system((base + "acceptance_run_a.json > acceptance_run_a.log 2>&1").c_str());
    const int rc_b = std::system((base + "acceptance_run_b.json > acceptance_run_b.log 2>&1").c_str());
    const auto a = slurp("acceptance_run_a.json");
    const auto b = slurp("acceptance_run_b.json");
    const bool exits_ok = rc_a != -1 && rc_b != -1 && WIFEXITED(rc_a) && WIFEXITED(rc_b) &&
                          WEXITSTATUS(rc_a) == 0 && WEXITSTATUS(rc_b) == 0;
    const bool ok = exits_ok && a && b && !a->empty() && *a == *b;
    report(13, ok, "cli determinism: run a exit %d, run b exit %d, reports %s (%zu bytes)",
           rc_a == -1 ? -1 : WEXITSTATUS(rc_a), rc_b == -1 ? -1 : WEXITSTATUS(rc_b),
           ok ? "byte-identical" : "differ or missing", a ? a->size() : 0);
#else
    report(13, false, "cli determinism: QRT_BIN/QRT_SMOKE_CONFIG not configured");
#endif
}

} // namespace

int main() {
    criterion1_intercept_resend_qber();
    criterion2_honest_sessions();
    criterion3_interception_always_aborts();
    criterion4_decoy_catches_compensated_pns();
    criterion5_reconciliation_and_pa_budget();
    criterion6_pa_collision_rate();
    criterion7_randomness_tests();
    criterion8_fuzzer_replay_and_recall();
    criterion9_detector_flags_and_evasion();
    criterion10_side_channel_recovery();
    criterion11_attestation_threshold_exhaustive();
    criterion12_bandit_convergence();
    criterion13_cli_determinism();
    std::printf("%d of 13 criteria failed\n", g_failures);
    return g_failures;
}
