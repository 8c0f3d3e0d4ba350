#pragma once

// Synthetic leakage traces for secret-dependent operations and a
// differential analyzer that recovers key bits from window statistics.

#include <cstdint>
#include <string>
#include <vector>

#include "qrt/rng.hpp"

namespace qrt {

using Bits = std::vector<uint8_t>;

struct LeakModel {
    double leak_weight = 1.0;  // signal amplitude per secret bit
    double noise_sigma = 0.5;  // additive Gaussian noise per sample
    uint32_t samples_per_bit = 4;

    // leak_weight^2 / noise_sigma^2; requires noise_sigma > 0
    double snr() const;
    void validate() const;
};

struct Trace {
    uint64_t trace_id = 0;
    uint64_t seed = 0;
    std::vector<double> samples; // key_length * samples_per_bit values
};

// sample(i*spb + j) = leak_weight * bit_i + N(0, noise_sigma)
Trace emit_trace(const Bits& secret_key, const LeakModel& model, uint64_t seed,
                 uint64_t trace_id = 0);

struct DpaResult {
    Bits recovered;
    std::vector<double> confidence; // per bit, in [0, 1]
    double threshold = 0.0;         // midpoint between the two cluster means
    double separation = 0.0;        // distance between cluster means
};

// Per-bit window means across traces, split by a 1-D two-means threshold.
// All traces must share one length and one generating secret.
DpaResult dpa_recover(const std::vector<Trace>& traces, uint32_t samples_per_bit);

double recovery_accuracy(const Bits& truth, const Bits& recovered);

// CSV rows: trace_id,sample_index,value
std::string trace_csv_header();
void append_trace_csv(std::string& out, const Trace& trace);

} // namespace qrt
