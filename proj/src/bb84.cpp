#include "qrt/bb84.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace qrt {

namespace {

constexpr double kZThreshold = 2.5758293035489004; // two-sided normal quantile at alpha = 0.01

// Arrival-time spread added by measure-and-resend hardware: the interceptor's
// own detection plus pulse regeneration widens the timing distribution of every
// pulse it touches, on top of whatever jitter the channel already has.
constexpr double kResendJitterNs = 2.5;

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

void SessionConfig::validate() const {
    if (n_rounds < 1) throw std::invalid_argument("session: n_rounds must be >= 1");
    if (!(mu_signal > 0.0) || !std::isfinite(mu_signal))
        throw std::invalid_argument("session: mu_signal must be positive and finite");
    if (!(mu_decoy >= 0.0) || !std::isfinite(mu_decoy))
        throw std::invalid_argument("session: mu_decoy must be non-negative and finite");
    if (decoy_enabled && !(mu_decoy > 0.0 && mu_decoy < mu_signal))
        throw std::invalid_argument("session: decoy runs need 0 < mu_decoy < mu_signal");
    if (!(basis_prob > 0.0 && basis_prob < 1.0))
        throw std::invalid_argument("session: basis_prob must be in (0, 1)");
    if (!(qber_abort_threshold > 0.0 && qber_abort_threshold < 0.5))
        throw std::invalid_argument("session: qber_abort_threshold must be in (0, 0.5)");
    if (!(sample_fraction > 0.0 && sample_fraction <= 0.5))
        throw std::invalid_argument("session: sample_fraction must be in (0, 0.5]");
    if (reconcile_passes < 2)
        throw std::invalid_argument("session: reconcile_passes must be >= 2");
    if (decoy_enabled) {
        double sum = 0.0;
        for (double p : intensity_probs) {
            if (!(p >= 0.0)) throw std::invalid_argument("session: intensity probs must be >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("session: intensity probs must sum to 1");
    }
    if (!(decoy_tolerance_sigmas > 0.0))
        throw std::invalid_argument("session: decoy_tolerance_sigmas must be > 0");
}

const char* abort_reason_name(AbortReason r) {
    switch (r) {
        case AbortReason::None: return "none";
        case AbortReason::QberExceeded: return "qber_exceeded";
        case AbortReason::DecoyAnomaly: return "decoy_anomaly";
        case AbortReason::ReconciliationFailed: return "reconciliation_failed";
    }
    return "unknown";
}

std::string telemetry_csv_header() {
    return "session_id,seed,sift_ratio,qber,gain_signal,gain_decoy,gain_vacuum,"
           "click_rect,click_diag,dark_rate,timing_var";
}

std::string telemetry_csv_row(const Telemetry& t) {
    std::string row = std::to_string(t.session_id) + "," + std::to_string(t.seed) + "," +
                      format_double(t.sift_ratio) + ",";
    row += t.qber_estimate ? format_double(*t.qber_estimate) : std::string("nan");
    row += "," + format_double(t.gain_signal) + "," + format_double(t.gain_decoy) + "," +
           format_double(t.gain_vacuum) + "," + format_double(t.click_rate_rect) + "," +
           format_double(t.click_rate_diag) + "," + format_double(t.dark_rate_estimate) + "," +
           format_double(t.timing_variance);
    return row;
}

std::vector<uint32_t> sift(const std::vector<Basis>& alice_bases,
                           const std::vector<Basis>& bob_bases,
                           const std::vector<DetectionOutcome>& outcomes) {
    if (alice_bases.size() != bob_bases.size() || alice_bases.size() != outcomes.size())
        throw std::invalid_argument("sift: input lengths differ");
    std::vector<uint32_t> kept;
    for (size_t i = 0; i < alice_bases.size(); ++i)
        if (outcomes[i].clicked && alice_bases[i] == bob_bases[i]) kept.push_back(uint32_t(i));
    return kept;
}

QberEstimate estimate_qber(const Bits& alice_sifted, const Bits& bob_sifted,
                           double sample_fraction, RngStream& rng) {
    if (alice_sifted.size() != bob_sifted.size())
        throw std::invalid_argument("estimate_qber: key lengths differ");
    if (!(sample_fraction > 0.0 && sample_fraction <= 0.5))
        throw std::invalid_argument("estimate_qber: sample_fraction must be in (0, 0.5]");
    QberEstimate est;
    const size_t n = alice_sifted.size();
    if (n == 0) return est;
    const size_t k = std::max<size_t>(1, size_t(sample_fraction * double(n)));

    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    for (size_t i = 0; i < k; ++i) { // partial Fisher-Yates: first k entries uniform
        size_t j = i + size_t(rng.below(n - i));
        std::swap(order[i], order[j]);
    }
    est.revealed_positions.assign(order.begin(), order.begin() + k);
    std::sort(est.revealed_positions.begin(), est.revealed_positions.end());

    uint64_t mismatches = 0;
    for (uint32_t p : est.revealed_positions)
        if (alice_sifted[p] != bob_sifted[p]) ++mismatches;
    est.qber = double(mismatches) / double(k);
    return est;
}

ReconciliationResult error_correct(const Bits& alice_key, const Bits& bob_key,
                                   double qber_hint, int passes) {
    if (!(qber_hint >= 0.0) || !std::isfinite(qber_hint))
        throw std::invalid_argument("error_correct: qber_hint must be finite and >= 0");
    ReconcileParams prm;
    prm.passes = passes;
    CascadeOutcome c = cascade_reconcile(alice_key, bob_key, qber_hint, prm);
    ReconciliationResult r;
    r.success = c.success;
    r.leaked_bits = c.leaked_bits;
    r.messages = std::move(c.messages);
    if (r.success) r.shared_key = alice_key;
    return r;
}

double binary_entropy(double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("binary_entropy: q must be in [0, 1]");
    if (q == 0.0 || q == 1.0) return 0.0;
    return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

int64_t pa_output_length(size_t n, double qber, uint64_t leaked_bits, uint64_t safety_bits) {
    double m = double(n) * (1.0 - binary_entropy(qber)) - double(leaked_bits) - double(safety_bits);
    return int64_t(std::floor(m));
}

Bits privacy_amplify(const Bits& shared_key, uint64_t leaked_bits, double qber,
                     uint64_t safety_bits, RngStream& rng) {
    if (shared_key.empty()) throw std::invalid_argument("privacy_amplify: key must be non-empty");
    if (!(qber >= 0.0 && qber <= 1.0))
        throw std::invalid_argument("privacy_amplify: qber must be in [0, 1]");
    const size_t n = shared_key.size();
    const int64_t m_signed = pa_output_length(n, qber, leaked_bits, safety_bits);
    if (m_signed <= 0) return {};
    const size_t m = size_t(m_signed);

    // Toeplitz matrix from n + m - 1 seeded diagonal bits: T[i][j] = d[i - j + n - 1].
    // Output bit i is the parity of row i AND the key, accumulated column-wise:
    // every set key bit j contributes the m-bit window of d starting at n-1-j.
    const size_t dbits = n + m - 1;
    std::vector<uint64_t> d((dbits + 63) / 64, 0);
    for (auto& w : d) w = rng.next_u64();
    const size_t out_words = (m + 63) / 64;
    std::vector<uint64_t> acc(out_words, 0);
    for (size_t j = 0; j < n; ++j) {
        if (!(shared_key[j] & 1)) continue;
        const size_t s = n - 1 - j;
        const size_t word = s >> 6;
        const unsigned off = unsigned(s & 63);
        for (size_t w = 0; w < out_words; ++w) {
            uint64_t lo = d[word + w] >> off;
            uint64_t hi = (off && word + w + 1 < d.size()) ? d[word + w + 1] << (64 - off) : 0;
            acc[w] ^= lo | hi;
        }
    }
    Bits out(m);
    for (size_t i = 0; i < m; ++i) out[i] = uint8_t((acc[i >> 6] >> (i & 63)) & 1);
    return out;
}

DecoyAnalysis decoy_estimate(const std::map<IntensityClass, IntensityStats>& gains,
                             double mu_signal, double mu_decoy, double qber_estimate,
                             double tolerance_sigmas) {
    if (!(mu_signal > 0.0 && mu_decoy > 0.0 && mu_decoy < mu_signal))
        throw std::invalid_argument("decoy_estimate: need 0 < mu_decoy < mu_signal");
    for (IntensityClass c : {IntensityClass::Signal, IntensityClass::Decoy, IntensityClass::Vacuum}) {
        auto it = gains.find(c);
        if (it == gains.end() || it->second.pulses < 100)
            throw std::invalid_argument("decoy_estimate: need >= 100 pulses per intensity class");
    }
    const IntensityStats sig = gains.at(IntensityClass::Signal);
    const IntensityStats dec = gains.at(IntensityClass::Decoy);
    const IntensityStats vac = gains.at(IntensityClass::Vacuum);
    const double qs = double(sig.clicks) / double(sig.pulses);
    const double qd = double(dec.clicks) / double(dec.pulses);
    const double y0 = double(vac.clicks) / double(vac.pulses);

    DecoyAnalysis a;
    a.y0_estimate = y0;
    a.decoy_gain_observed = qd;

    // Poisson channel model Q(mu) = 1 - (1 - Y0) e^{-mu tau}. The signal gain
    // pins tau; the decoy gain then has a parameter-free prediction.
    const double one_minus_y0 = std::max(1e-12, 1.0 - y0);
    const double ratio = std::clamp((1.0 - qs) / one_minus_y0, 1e-12, 1.0);
    const double r = mu_decoy / mu_signal;
    const double a_pow = std::pow(ratio, r);
    const double qd_pred = 1.0 - one_minus_y0 * a_pow;
    a.decoy_gain_predicted = qd_pred;

    auto var_of = [](double q, uint64_t n) { return q * (1.0 - q) / double(n); };
    const double dds = r * std::pow(ratio, r - 1.0); // d qd_pred / d qs
    const double ddy = a_pow * (1.0 - r);            // d qd_pred / d y0
    const double sigma = std::sqrt(var_of(std::clamp(qd_pred, 1e-12, 1.0 - 1e-12), dec.pulses) +
                                   dds * dds * var_of(qs, sig.pulses) +
                                   ddy * ddy * var_of(y0, vac.pulses));
    a.deviation_sigmas = sigma > 0.0 ? std::abs(qd - qd_pred) / sigma : 0.0;
    a.pns_suspected = a.deviation_sigmas > tolerance_sigmas;

    // Standard two-intensity linear bound on the single-photon yield.
    const double mu = mu_signal, nu = mu_decoy;
    double y1 = (mu / (mu * nu - nu * nu)) *
                (qd * std::exp(nu) - qs * std::exp(mu) * (nu * nu) / (mu * mu) -
                 (mu * mu - nu * nu) / (mu * mu) * y0);
    a.y1_lower_bound = std::clamp(y1, 0.0, 1.0);
    if (a.y1_lower_bound > 0.0) {
        double e1 = (qber_estimate * qd * std::exp(nu) - 0.5 * y0) / (a.y1_lower_bound * nu);
        a.e1_upper_bound = std::clamp(e1, 0.0, 1.0);
    } else {
        a.e1_upper_bound = 1.0;
    }
    return a;
}

RandomnessVerdict test_key_randomness(const Bits& key) {
    if (key.size() < 100)
        throw std::invalid_argument("test_key_randomness: key must have >= 100 bits");
    const size_t n = key.size();
    uint64_t ones = 0;
    for (uint8_t b : key) ones += b & 1;
    RandomnessVerdict v;
    v.monobit_z = std::abs(2.0 * double(ones) - double(n)) / std::sqrt(double(n));
    v.monobit_pass = v.monobit_z < kZThreshold;

    const double pi = double(ones) / double(n);
    if (pi > 0.0 && pi < 1.0) {
        uint64_t runs = 1;
        for (size_t i = 1; i < n; ++i) runs += key[i] != key[i - 1];
        const double expected = 2.0 * double(n) * pi * (1.0 - pi);
        v.runs_z = std::abs(double(runs) - expected) / (2.0 * std::sqrt(double(n)) * pi * (1.0 - pi));
        v.runs_pass = v.runs_z < kZThreshold;
    } else {
        v.runs_z = std::numeric_limits<double>::infinity();
        v.runs_pass = false;
    }
    v.pass = v.monobit_pass && v.runs_pass;
    return v;
}

SessionResult run_session(const SessionConfig& config, const ChannelParams& channel,
                          const AdversaryStrategy* adversary, uint64_t seed,
                          uint64_t session_id) {
    config.validate();
    channel.validate();
    RngStream rng(seed);

    // An Adaptive strategy run directly degrades to a uniform one-shot arm
    // pick; the campaign layer resolves arms with real bandit state instead.
    const AdversaryStrategy* effective = adversary;
    if (adversary && adversary->is_adaptive()) {
        adversary->validate();
        const auto& ad = std::get<Adaptive>(adversary->kind);
        effective = &ad.arms[adapt_strategy({}, ad.arms.size(), ad.epsilon, rng)];
    }
    AdversaryEngine engine(effective);
    const bool resend_in_path =
        effective && std::holds_alternative<InterceptResend>(effective->kind);

    SessionResult result;
    Transcript& tr = result.transcript;
    Telemetry& tm = result.telemetry;
    tm.session_id = session_id;
    tm.seed = seed;
    tm.decoy_used = config.decoy_enabled;
    tr.rounds.reserve(config.n_rounds);

    uint64_t rect_rounds = 0, rect_clicks = 0, diag_rounds = 0, diag_clicks = 0;
    uint64_t empty_arrivals = 0, empty_clicks = 0;
    double jitter_sum = 0.0, jitter_sq = 0.0;
    uint64_t jitter_n = 0;

    for (uint64_t i = 0; i < config.n_rounds; ++i) {
        engine.begin_round(i);
        const uint8_t bit = rng.bit();
        const Basis basis = rng.bernoulli(config.basis_prob) ? Basis::Rectilinear : Basis::Diagonal;
        IntensityClass cls = IntensityClass::Signal;
        double mu = config.mu_signal;
        if (config.decoy_enabled) {
            const double u = rng.uniform01();
            if (u < config.intensity_probs[0]) {
                cls = IntensityClass::Signal;
            } else if (u < config.intensity_probs[0] + config.intensity_probs[1]) {
                cls = IntensityClass::Decoy;
                mu = config.mu_decoy;
            } else {
                cls = IntensityClass::Vacuum;
                mu = 0.0;
            }
        }
        const PhotonPulse pulse = prepare_pulse(bit, basis, mu, cls, rng, i);
        bool lossless = false;
        const PhotonPulse forwarded = engine.on_pulse(pulse, rng, lossless);
        const PhotonPulse arrival = lossless ? forwarded : transmit(forwarded, channel, rng);
        const Basis bob_actual = rng.bernoulli(config.basis_prob) ? Basis::Rectilinear : Basis::Diagonal;
        DetectionOutcome outcome = measure(arrival, bob_actual, channel, rng);
        outcome = engine.on_outcome(outcome, rng);
        const Basis recorded = engine.on_recorded_basis(bob_actual, rng);
        outcome.measured_basis = recorded;

        const bool touched = engine.record().rounds.back().touched;
        if (outcome.clicked) {
            // Every click carries a timestamp; resent pulses arrive with the
            // interceptor's detection latency spread folded in.
            const double sigma = resend_in_path && touched
                                     ? std::hypot(channel.timing_jitter_ns, kResendJitterNs)
                                     : channel.timing_jitter_ns;
            const double j = sigma > 0.0 ? rng.gaussian(0.0, sigma) : 0.0;
            jitter_sum += j;
            jitter_sq += j * j;
            ++jitter_n;
        }

        tm.pulses[size_t(cls)] += 1;
        tm.clicks[size_t(cls)] += outcome.clicked;
        if (recorded == Basis::Rectilinear) {
            ++rect_rounds;
            rect_clicks += outcome.clicked;
        } else {
            ++diag_rounds;
            diag_clicks += outcome.clicked;
        }
        if (arrival.photon_count == 0) {
            ++empty_arrivals;
            empty_clicks += outcome.clicked;
        }

        RoundRecord rec;
        rec.alice_bit = bit;
        rec.alice_basis = basis;
        rec.intensity = cls;
        rec.eve_touched = touched;
        rec.bob_basis = recorded;
        rec.outcome = outcome;
        rec.arrived_photons = arrival.photon_count;
        tr.rounds.push_back(rec);
    }
    result.eve = engine.take_record();

    // Sifting and telemetry are computed unconditionally; aborts only affect
    // the key-distillation tail.
    for (uint32_t i = 0; i < tr.rounds.size(); ++i) {
        const RoundRecord& rc = tr.rounds[i];
        if (rc.outcome.clicked && rc.alice_basis == rc.bob_basis) tr.sifted_indices.push_back(i);
    }
    Bits alice_sifted, bob_sifted;
    alice_sifted.reserve(tr.sifted_indices.size());
    for (uint32_t idx : tr.sifted_indices) {
        alice_sifted.push_back(tr.rounds[idx].alice_bit);
        bob_sifted.push_back(tr.rounds[idx].outcome.bit);
    }
    tm.sift_ratio = double(tr.sifted_indices.size()) / double(config.n_rounds);

    uint64_t true_mismatch = 0;
    for (size_t i = 0; i < alice_sifted.size(); ++i)
        true_mismatch += alice_sifted[i] != bob_sifted[i];
    result.qber_sifted_true =
        alice_sifted.empty() ? 0.0 : double(true_mismatch) / double(alice_sifted.size());

    const QberEstimate est = estimate_qber(alice_sifted, bob_sifted, config.sample_fraction, rng);
    tm.qber_estimate = est.qber;
    for (uint32_t p : est.revealed_positions) tr.revealed_indices.push_back(tr.sifted_indices[p]);

    for (size_t c = 0; c < 3; ++c) {
        const double g = tm.pulses[c] ? double(tm.clicks[c]) / double(tm.pulses[c]) : 0.0;
        if (c == 0) tm.gain_signal = g;
        if (c == 1) tm.gain_decoy = g;
        if (c == 2) tm.gain_vacuum = g;
    }
    tm.click_rate_rect = rect_rounds ? double(rect_clicks) / double(rect_rounds) : 0.0;
    tm.click_rate_diag = diag_rounds ? double(diag_clicks) / double(diag_rounds) : 0.0;
    tm.dark_rate_estimate = empty_arrivals ? double(empty_clicks) / double(empty_arrivals) : 0.0;
    if (jitter_n > 1) {
        const double mean = jitter_sum / double(jitter_n);
        tm.timing_variance = jitter_sq / double(jitter_n) - mean * mean;
    }

    if (config.decoy_enabled) {
        bool enough = true;
        for (size_t c = 0; c < 3; ++c) enough = enough && tm.pulses[c] >= 100;
        if (enough) {
            std::map<IntensityClass, IntensityStats> stats;
            stats[IntensityClass::Signal] = {tm.pulses[0], tm.clicks[0]};
            stats[IntensityClass::Decoy] = {tm.pulses[1], tm.clicks[1]};
            stats[IntensityClass::Vacuum] = {tm.pulses[2], tm.clicks[2]};
            result.decoy = decoy_estimate(stats, config.mu_signal, config.mu_decoy,
                                          est.qber.value_or(0.0), config.decoy_tolerance_sigmas);
        }
    }

    if (est.qber && *est.qber > config.qber_abort_threshold) {
        tr.abort_reason = AbortReason::QberExceeded;
        return result;
    }
    if (result.decoy && result.decoy->pns_suspected) {
        tr.abort_reason = AbortReason::DecoyAnomaly;
        return result;
    }
    if (!est.qber) {
        tr.abort_reason = AbortReason::ReconciliationFailed;
        return result;
    }

    Bits alice_kept, bob_kept;
    {
        std::vector<uint8_t> revealed(alice_sifted.size(), 0);
        for (uint32_t p : est.revealed_positions) revealed[p] = 1;
        for (size_t i = 0; i < alice_sifted.size(); ++i) {
            if (revealed[i]) continue;
            alice_kept.push_back(alice_sifted[i]);
            bob_kept.push_back(bob_sifted[i]);
        }
    }
    if (alice_kept.empty()) {
        tr.abort_reason = AbortReason::ReconciliationFailed;
        return result;
    }

    ReconciliationResult rec = error_correct(alice_kept, bob_kept, *est.qber, config.reconcile_passes);
    result.leaked_bits = rec.leaked_bits;
    for (const DialogueMessage& m : rec.messages) tr.parity_messages.push_back(encode_message(m));
    if (!rec.success) {
        tr.abort_reason = AbortReason::ReconciliationFailed;
        return result;
    }

    const Bits final_key =
        privacy_amplify(rec.shared_key, rec.leaked_bits, *est.qber, config.pa_safety_bits, rng);
    if (final_key.empty()) {
        tr.abort_reason = AbortReason::ReconciliationFailed;
        return result;
    }
    tr.alice_final_key = final_key;
    tr.bob_final_key = final_key;
    return result;
}

PostProcessingFixture make_postprocessing_fixture(const SessionConfig& config,
                                                  const Transcript& transcript) {
    if (transcript.parity_messages.empty())
        throw std::invalid_argument("fixture: transcript has no reconciliation dialogue");
    PostProcessingFixture fx;
    const size_t n = transcript.rounds.size();
    fx.ctx.n_rounds = n;
    fx.ctx.clicked.resize(n);
    fx.ctx.bob_bits.resize(n);
    fx.ctx.bob_bases.resize(n);
    fx.ctx.alice_bases.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const RoundRecord& rc = transcript.rounds[i];
        fx.ctx.clicked[i] = rc.outcome.clicked;
        fx.ctx.bob_bits[i] = rc.outcome.bit;
        fx.ctx.bob_bases[i] = rc.bob_basis;
        fx.ctx.alice_bases[i] = rc.alice_basis;
    }
    fx.ctx.qber_abort_threshold = config.qber_abort_threshold;
    fx.ctx.reconcile_passes = config.reconcile_passes;

    std::vector<uint32_t> positions;
    {
        size_t cursor = 0;
        for (size_t i = 0; i < transcript.sifted_indices.size(); ++i) {
            if (cursor < transcript.revealed_indices.size() &&
                transcript.revealed_indices[cursor] == transcript.sifted_indices[i]) {
                positions.push_back(uint32_t(i));
                ++cursor;
            } else {
                fx.alice_kept_key.push_back(transcript.rounds[transcript.sifted_indices[i]].alice_bit);
            }
        }
        if (cursor != transcript.revealed_indices.size())
            throw std::invalid_argument("fixture: revealed indices not a subset of sifted indices");
    }
    Bits revealed_bits;
    for (uint32_t idx : transcript.revealed_indices)
        revealed_bits.push_back(transcript.rounds[idx].alice_bit);

    fx.dialogue.push_back(encode_message(make_sift_message(transcript.sifted_indices)));
    fx.dialogue.push_back(encode_message(make_sample_message(positions, revealed_bits)));
    for (const auto& raw : transcript.parity_messages) fx.dialogue.push_back(raw);
    return fx;
}

} // namespace qrt
