#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qrt/sidechannel.hpp"

using namespace qrt;

namespace {

Bits random_key(size_t n, uint64_t seed) {
    RngStream rng(seed);
    Bits b(n);
    for (auto& x : b) x = uint8_t(rng.bit());
    return b;
}

std::vector<Trace> collect(const Bits& key, const LeakModel& m, size_t n, uint64_t seed0) {
    std::vector<Trace> out;
    out.reserve(n);
    for (size_t t = 0; t < n; ++t) out.push_back(emit_trace(key, m, seed0 + t, t));
    return out;
}

} // namespace

TEST_CASE("leak model validation and snr") {
    LeakModel m;
    m.leak_weight = 1.0;
    m.noise_sigma = 0.4472135954999579; // snr 5
    CHECK(m.snr() == doctest::Approx(5.0).epsilon(1e-9));
    m.leak_weight = 0.0;
    CHECK(m.snr() == 0.0);

    LeakModel bad;
    bad.noise_sigma = 0.0;
    CHECK_NOTHROW(bad.validate()); // noiseless traces are legal
    CHECK_THROWS(bad.snr());       // but snr is undefined there
    bad.noise_sigma = -1.0;
    CHECK_THROWS(bad.validate());
    bad = LeakModel{};
    bad.samples_per_bit = 0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("traces are deterministic in the seed and sized by the model") {
    const Bits key = random_key(64, 1);
    LeakModel m;
    m.samples_per_bit = 4;
    const Trace a = emit_trace(key, m, 42, 7);
    CHECK(a.trace_id == 7);
    CHECK(a.seed == 42);
    CHECK(a.samples.size() == 64 * 4);
    const Trace b = emit_trace(key, m, 42, 7);
    CHECK(a.samples == b.samples);
    const Trace c = emit_trace(key, m, 43, 7);
    CHECK(a.samples != c.samples);

    // with the noise floor removed the samples are exactly the leak signal
    LeakModel clean;
    clean.leak_weight = 2.0;
    clean.noise_sigma = 1e-12;
    clean.samples_per_bit = 2;
    const Trace t = emit_trace(Bits{1, 0, 1}, clean, 5);
    REQUIRE(t.samples.size() == 6);
    CHECK(t.samples[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(t.samples[2] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(t.samples[4] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("differential analysis recovers keys when the leak dominates") {
    const Bits key = random_key(256, 2);
    LeakModel m;
    m.leak_weight = 1.0;
    m.noise_sigma = 0.4472135954999579; // snr 5
    const DpaResult r = dpa_recover(collect(key, m, 200, 1000), m.samples_per_bit);
    REQUIRE(r.recovered.size() == key.size());
    CHECK(recovery_accuracy(key, r.recovered) >= 0.95);
    CHECK(r.separation > 0.5);
    REQUIRE(r.confidence.size() == key.size());
    for (double c : r.confidence) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("zero leakage leaves the analyzer guessing") {
    const Bits key = random_key(1024, 3);
    LeakModel m;
    m.leak_weight = 0.0;
    m.noise_sigma = 1.0;
    const DpaResult r = dpa_recover(collect(key, m, 50, 2000), m.samples_per_bit);
    const double acc = recovery_accuracy(key, r.recovered);
    CHECK(acc > 0.40);
    CHECK(acc < 0.60);
}

TEST_CASE("recovery accuracy is an exact bit agreement ratio") {
    CHECK(recovery_accuracy({1, 1, 0, 0}, {1, 1, 0, 0}) == 1.0);
    CHECK(recovery_accuracy({1, 1, 0, 0}, {0, 0, 1, 1}) == 0.0);
    CHECK(recovery_accuracy({1, 1, 0, 0}, {1, 0, 0, 1}) == 0.5);
    CHECK_THROWS(recovery_accuracy({1, 0}, {1}));
    CHECK_THROWS(recovery_accuracy({}, {}));
}

TEST_CASE("analyzer input validation") {
    CHECK_THROWS(dpa_recover({}, 4));
    const Bits key = random_key(8, 4);
    LeakModel m;
    std::vector<Trace> mixed = collect(key, m, 3, 100);
    mixed[1].samples.resize(8); // length mismatch across traces
    CHECK_THROWS(dpa_recover(mixed, m.samples_per_bit));
    CHECK_THROWS(dpa_recover(collect(key, m, 3, 100), 0));
}

TEST_CASE("trace csv format") {
    CHECK(trace_csv_header() == "trace_id,sample_index,value");
    Trace t;
    t.trace_id = 5;
    t.samples = {1.5, -2.25};
    std::string out;
    append_trace_csv(out, t);
    CHECK(out.find("5,0,") == 0);
    CHECK(out.find("5,1,") != std::string::npos);
    CHECK(out.back() == '\n');
}
