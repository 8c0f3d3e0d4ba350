#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "qrt/postproc.hpp"
#include "qrt/rng.hpp"

using namespace qrt;

namespace {

Bits random_bits(size_t n, uint64_t seed) {
    RngStream rng(seed);
    Bits b(n);
    for (auto& x : b) x = uint8_t(rng.bit());
    return b;
}

Bits flip_fraction(Bits b, double fraction, uint64_t seed) {
    RngStream rng(seed);
    const size_t flips = size_t(double(b.size()) * fraction);
    std::vector<uint32_t> pos(b.size());
    for (uint32_t i = 0; i < pos.size(); ++i) pos[i] = i;
    rng.shuffle(pos);
    for (size_t i = 0; i < flips; ++i) b[pos[i]] ^= 1;
    return b;
}

// honest dialogue for a Bob context where every round clicked in a matching
// basis; alice/bob keys split into revealed sample prefix and kept remainder
struct HonestFixture {
    BobSessionContext ctx;
    Bits alice_kept;
    std::vector<std::vector<uint8_t>> dialogue;
};

HonestFixture make_honest_fixture(size_t n_rounds, size_t revealed, const Bits& alice,
                                  const Bits& bob, int passes, double qber_hint) {
    HonestFixture f;
    f.ctx.n_rounds = n_rounds;
    f.ctx.clicked.assign(n_rounds, 1);
    f.ctx.bob_bases.assign(n_rounds, Basis::Rectilinear);
    f.ctx.alice_bases.assign(n_rounds, Basis::Rectilinear);
    f.ctx.bob_bits = bob;
    f.ctx.reconcile_passes = passes;
    std::vector<uint32_t> rounds(n_rounds);
    for (uint32_t i = 0; i < n_rounds; ++i) rounds[i] = i;
    std::vector<uint32_t> sample(revealed);
    for (uint32_t i = 0; i < revealed; ++i) sample[i] = i;
    const Bits revealed_bits(alice.begin(), alice.begin() + long(revealed));
    f.alice_kept.assign(alice.begin() + long(revealed), alice.end());
    const Bits bob_kept(bob.begin() + long(revealed), bob.end());
    ReconcileParams params;
    params.passes = passes;
    const CascadeOutcome cascade =
        cascade_reconcile(f.alice_kept, bob_kept, qber_hint, params);
    f.dialogue.push_back(encode_message(make_sift_message(rounds)));
    f.dialogue.push_back(encode_message(make_sample_message(sample, revealed_bits)));
    for (const DialogueMessage& m : cascade.messages) f.dialogue.push_back(encode_message(m));
    return f;
}

} // namespace

TEST_CASE("message framing round-trips and rejects length lies") {
    DialogueMessage m;
    m.type = MsgType::SampleReveal;
    m.seq = 7;
    m.payload = {1, 2, 3, 4, 5};
    std::vector<uint8_t> raw = encode_message(m);
    CHECK(raw.size() == 9 + 5);
    CHECK(raw[0] == 2);                                      // type byte
    CHECK(raw[1] == 7);                                      // seq, little endian
    CHECK(raw[5] == 5);                                      // declared length
    DialogueMessage back;
    REQUIRE(decode_message(raw, back));
    CHECK(back.type == m.type);
    CHECK(back.seq == m.seq);
    CHECK(back.payload == m.payload);

    raw[5] = 6; // declared length disagrees with the actual payload
    CHECK_FALSE(decode_message(raw, back));
    raw[5] = 5;
    raw[0] = 9; // unknown type
    CHECK_FALSE(decode_message(raw, back));
    CHECK_FALSE(decode_message(std::vector<uint8_t>{1, 0, 0}, back));
}

TEST_CASE("bit packing is LSB-first") {
    std::vector<uint8_t> bytes;
    bytes.resize(1, 0);
    pack_bit(bytes, 0, 1);
    pack_bit(bytes, 2, 1);
    pack_bit(bytes, 3, 1);
    CHECK(bytes[0] == 0b1101);
    CHECK(unpack_bit(bytes, 0) == 1);
    CHECK(unpack_bit(bytes, 1) == 0);
    CHECK(unpack_bit(bytes, 3) == 1);
}

TEST_CASE("key digest is stable and bit-sensitive") {
    Bits key = random_bits(256, 1);
    const uint64_t d = key_digest64(key);
    CHECK(d == key_digest64(key));
    key[100] ^= 1;
    CHECK(d != key_digest64(key));
}

TEST_CASE("block size tracks the error rate and clamps to the key") {
    CHECK(reconcile_block_size(0.07, 10000) == 10); // 0.73 / 0.07 = 10.4
    CHECK(reconcile_block_size(0.5, 10000) == 4);   // floor
    CHECK(reconcile_block_size(1e-9, 100) == 100);  // whole key
    const std::vector<uint32_t> p1 = reconcile_permutation(100, 1);
    const std::vector<uint32_t> p2 = reconcile_permutation(100, 2);
    CHECK(p1 != p2);
    std::vector<uint32_t> sorted = p1;
    std::sort(sorted.begin(), sorted.end());
    for (uint32_t i = 0; i < 100; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("cascade corrects residual errors and accounts all leakage") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        const Bits alice = random_bits(1024, seed);
        const Bits bob = flip_fraction(alice, 0.05, seed + 100);
        const CascadeOutcome out = cascade_reconcile(alice, bob, 0.05);
        REQUIRE(out.success);
        CHECK(out.corrected == alice);
        // every parity message discloses exactly its packed bit count
        uint64_t parity_bits = 0;
        for (const DialogueMessage& m : out.messages) {
            if (m.type == MsgType::BlockParity || m.type == MsgType::BisectParity) {
                uint32_t count = m.payload[0] | uint32_t(m.payload[1]) << 8 |
                                 uint32_t(m.payload[2]) << 16 | uint32_t(m.payload[3]) << 24;
                parity_bits += count;
            }
        }
        CHECK(out.leaked_bits == parity_bits + 64); // + verification digest
        CHECK(out.messages.back().type == MsgType::KeyDigest);
    }
}

TEST_CASE("a zero error hint skips straight to the digest") {
    const Bits alice = random_bits(512, 4);
    const CascadeOutcome out = cascade_reconcile(alice, alice, 0.0);
    CHECK(out.success);
    CHECK(out.corrected == alice);
    CHECK(out.leaked_bits == 64);
    REQUIRE(out.messages.size() == 1);
    CHECK(out.messages[0].type == MsgType::KeyDigest);
}

TEST_CASE("cascade reports failure when correction power is too low") {
    const Bits alice = random_bits(400, 5);
    const Bits bob = flip_fraction(alice, 0.25, 50);
    ReconcileParams params;
    params.passes = 2;
    const CascadeOutcome out = cascade_reconcile(alice, bob, 0.02, params);
    CHECK_FALSE(out.success); // digest comparison catches the residue
}

TEST_CASE("verifier accepts an honest dialogue and releases the right key") {
    const Bits alice = random_bits(600, 6);
    const Bits bob = flip_fraction(alice, 0.04, 60);
    HonestFixture f = make_honest_fixture(600, 100, alice, bob, 6, 0.04);
    // recorder hint must equal the verifier's own sample estimate
    size_t sample_errors = 0;
    for (size_t i = 0; i < 100; ++i) sample_errors += alice[i] != bob[i] ? 1 : 0;
    f = make_honest_fixture(600, 100, alice, bob, 6, double(sample_errors) / 100.0);
    const VerifierResult r = run_postprocessing_verifier(f.ctx, f.dialogue, {});
    REQUIRE(r.success);
    CHECK(r.abort == VerifierAbort::None);
    CHECK(r.key == f.alice_kept);
    CHECK(r.messages_accepted == f.dialogue.size());
}

TEST_CASE("verifier aborts on sample error rates over the threshold") {
    const Bits alice = random_bits(400, 7);
    const Bits bob = flip_fraction(alice, 0.25, 70);
    size_t sample_errors = 0;
    for (size_t i = 0; i < 100; ++i) sample_errors += alice[i] != bob[i] ? 1 : 0;
    const HonestFixture f =
        make_honest_fixture(400, 100, alice, bob, 6, double(sample_errors) / 100.0);
    const VerifierResult r = run_postprocessing_verifier(f.ctx, f.dialogue, {});
    CHECK_FALSE(r.success);
    CHECK(r.abort == VerifierAbort::QberThreshold);
}

TEST_CASE("verifier rejects tampered frames, sequence gaps, and bad digests") {
    const Bits alice = random_bits(500, 8);
    const Bits bob = flip_fraction(alice, 0.03, 80);
    size_t sample_errors = 0;
    for (size_t i = 0; i < 125; ++i) sample_errors += alice[i] != bob[i] ? 1 : 0;
    const HonestFixture f =
        make_honest_fixture(500, 125, alice, bob, 6, double(sample_errors) / 125.0);

    auto run = [&](std::vector<std::vector<uint8_t>> d) {
        return run_postprocessing_verifier(f.ctx, d, {});
    };

    std::vector<std::vector<uint8_t>> truncated(f.dialogue.begin(), f.dialogue.end() - 1);
    CHECK(run(truncated).abort == VerifierAbort::UnexpectedEnd);

    std::vector<std::vector<uint8_t>> lying = f.dialogue;
    lying[0][5] ^= 0xff;
    CHECK(run(lying).abort == VerifierAbort::MalformedMessage);

    std::vector<std::vector<uint8_t>> swapped = f.dialogue;
    std::swap(swapped[0], swapped[1]);
    const VerifierResult sw = run(swapped);
    CHECK_FALSE(sw.success);
    CHECK((sw.abort == VerifierAbort::UnexpectedType || sw.abort == VerifierAbort::BadSequence));

    std::vector<std::vector<uint8_t>> bad_digest = f.dialogue;
    bad_digest.back()[9] ^= 1;
    CHECK(run(bad_digest).abort == VerifierAbort::DigestMismatch);

    std::vector<std::vector<uint8_t>> short_digest = f.dialogue;
    short_digest.back().resize(9 + 4);
    short_digest.back()[5] = 4; // re-declare the shorter length honestly
    CHECK(run(short_digest).abort == VerifierAbort::DigestLength);

    std::vector<std::vector<uint8_t>> trailing = f.dialogue;
    trailing.push_back(trailing.back());
    CHECK(run(trailing).abort == VerifierAbort::TrailingMessage);
}

TEST_CASE("planted digest bug tolerates short digests unless strictness is on") {
    const Bits alice = random_bits(500, 9);
    const Bits bob = flip_fraction(alice, 0.03, 90);
    size_t sample_errors = 0;
    for (size_t i = 0; i < 125; ++i) sample_errors += alice[i] != bob[i] ? 1 : 0;
    const HonestFixture f =
        make_honest_fixture(500, 125, alice, bob, 6, double(sample_errors) / 125.0);

    std::vector<std::vector<uint8_t>> cut = f.dialogue;
    cut.back().resize(3); // truncated digest frame, stale declared length

    PostProcessingOptions buggy;
    buggy.bug_skip_digest_length_check = true;
    const VerifierResult lax = run_postprocessing_verifier(f.ctx, cut, buggy);
    CHECK(lax.success); // empty digest payload compares vacuously

    buggy.strict_digest_verification = true;
    const VerifierResult strict = run_postprocessing_verifier(f.ctx, cut, buggy);
    CHECK_FALSE(strict.success);
}

TEST_CASE("step budget turns runaway dialogues into a distinct abort") {
    const Bits alice = random_bits(2000, 10);
    const Bits bob = flip_fraction(alice, 0.05, 100);
    size_t sample_errors = 0;
    for (size_t i = 0; i < 500; ++i) sample_errors += alice[i] != bob[i] ? 1 : 0;
    const HonestFixture f =
        make_honest_fixture(2000, 500, alice, bob, 6, double(sample_errors) / 500.0);
    const VerifierResult r = run_postprocessing_verifier(f.ctx, f.dialogue, {}, 50);
    CHECK_FALSE(r.success);
    CHECK(r.abort == VerifierAbort::StepBudget);
}
