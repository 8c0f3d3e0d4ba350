#include "qrt/sidechannel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace qrt {

double LeakModel::snr() const {
    if (!(noise_sigma > 0.0)) throw std::invalid_argument("leak model: snr needs noise_sigma > 0");
    return (leak_weight * leak_weight) / (noise_sigma * noise_sigma);
}

void LeakModel::validate() const {
    if (!std::isfinite(leak_weight)) throw std::invalid_argument("leak model: leak_weight not finite");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw std::invalid_argument("leak model: noise_sigma must be >= 0");
    if (samples_per_bit == 0) throw std::invalid_argument("leak model: samples_per_bit must be >= 1");
}

Trace emit_trace(const Bits& secret_key, const LeakModel& model, uint64_t seed,
                 uint64_t trace_id) {
    model.validate();
    if (secret_key.empty()) throw std::invalid_argument("emit_trace: key must be non-empty");
    RngStream rng(seed);
    Trace t;
    t.trace_id = trace_id;
    t.seed = seed;
    t.samples.reserve(secret_key.size() * model.samples_per_bit);
    for (uint8_t b : secret_key) {
        const double level = model.leak_weight * double(b & 1);
        for (uint32_t j = 0; j < model.samples_per_bit; ++j)
            t.samples.push_back(model.noise_sigma > 0.0
                                    ? level + rng.gaussian(0.0, model.noise_sigma)
                                    : level);
    }
    return t;
}

DpaResult dpa_recover(const std::vector<Trace>& traces, uint32_t samples_per_bit) {
    if (traces.empty()) throw std::invalid_argument("dpa_recover: need at least 1 trace");
    if (samples_per_bit == 0) throw std::invalid_argument("dpa_recover: samples_per_bit must be >= 1");
    const size_t len = traces[0].samples.size();
    for (const Trace& t : traces)
        if (t.samples.size() != len)
            throw std::invalid_argument("dpa_recover: traces have inconsistent lengths");
    if (len == 0 || len % samples_per_bit != 0)
        throw std::invalid_argument("dpa_recover: trace length not a multiple of samples_per_bit");
    const size_t n_bits = len / samples_per_bit;

    std::vector<double> means(n_bits, 0.0);
    for (const Trace& t : traces)
        for (size_t i = 0; i < n_bits; ++i)
            for (uint32_t j = 0; j < samples_per_bit; ++j)
                means[i] += t.samples[i * samples_per_bit + j];
    const double norm = 1.0 / (double(traces.size()) * double(samples_per_bit));
    for (double& m : means) m *= norm;

    // 1-D two-means: centers start at the extremes, then Lloyd iterations.
    double c0 = *std::min_element(means.begin(), means.end());
    double c1 = *std::max_element(means.begin(), means.end());
    for (int iter = 0; iter < 64; ++iter) {
        const double mid = 0.5 * (c0 + c1);
        double s0 = 0.0, s1 = 0.0;
        size_t n0 = 0, n1 = 0;
        for (double m : means) {
            if (m < mid) {
                s0 += m;
                ++n0;
            } else {
                s1 += m;
                ++n1;
            }
        }
        const double next0 = n0 ? s0 / double(n0) : c0;
        const double next1 = n1 ? s1 / double(n1) : c1;
        if (next0 == c0 && next1 == c1) break;
        c0 = next0;
        c1 = next1;
    }

    DpaResult r;
    r.threshold = 0.5 * (c0 + c1);
    r.separation = c1 - c0;
    const double half = std::max(0.5 * r.separation, std::numeric_limits<double>::min());
    r.recovered.reserve(n_bits);
    r.confidence.reserve(n_bits);
    for (double m : means) {
        r.recovered.push_back(m >= r.threshold ? 1 : 0);
        r.confidence.push_back(std::min(1.0, std::abs(m - r.threshold) / half));
    }
    return r;
}

double recovery_accuracy(const Bits& truth, const Bits& recovered) {
    if (truth.size() != recovered.size() || truth.empty())
        throw std::invalid_argument("recovery_accuracy: length mismatch");
    size_t hits = 0;
    for (size_t i = 0; i < truth.size(); ++i) hits += (truth[i] & 1) == (recovered[i] & 1);
    return double(hits) / double(truth.size());
}

std::string trace_csv_header() { return "trace_id,sample_index,value"; }

void append_trace_csv(std::string& out, const Trace& trace) {
    char buf[64];
    for (size_t i = 0; i < trace.samples.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%llu,%zu,%.10g\n",
                      static_cast<unsigned long long>(trace.trace_id), i, trace.samples[i]);
        out += buf;
    }
}

} // namespace qrt
