#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qrt/qubit.hpp"

namespace qrt {

using Bits = std::vector<uint8_t>; // one key bit per element, value 0 or 1

// Classical post-processing dialogue. Every message is framed as
//   type u8 | seq u32 LE | declared payload length u32 LE | payload
// and the dialogue for one session is the ordered list
//   SiftAnnounce, SampleReveal, {BlockParity | BisectParity}*, KeyDigest.
enum class MsgType : uint8_t {
    SiftAnnounce = 1, // count u32, count strictly increasing round ids u32
    SampleReveal = 2, // count u32, count positions u32, packed revealed bits
    BlockParity = 3,  // count u32 (blocks of current pass), packed parity bits
    BisectParity = 4, // count u32 (= 1), packed parity bit of the queried half
    KeyDigest = 5,    // 8-byte LE key digest
};

struct DialogueMessage {
    MsgType type = MsgType::SiftAnnounce;
    uint32_t seq = 0;
    std::vector<uint8_t> payload;
};

std::vector<uint8_t> encode_message(const DialogueMessage& m);
// Strict frame parse: known type, declared length equal to actual payload.
bool decode_message(const std::vector<uint8_t>& raw, DialogueMessage& out);

DialogueMessage make_sift_message(const std::vector<uint32_t>& sift_rounds);
DialogueMessage make_sample_message(const std::vector<uint32_t>& positions,
                                    const Bits& revealed_bits);

// Packed bit helpers, LSB-first within each byte.
void pack_bit(std::vector<uint8_t>& bytes, size_t index, uint8_t bit);
uint8_t unpack_bit(const std::vector<uint8_t>& bytes, size_t index);

// Seeded 64-bit polynomial hash used as the key verification digest.
uint64_t key_digest64(const Bits& key);

// Shuffle-and-bisect reconciliation schedule, shared by the interactive
// recorder and the replay verifier. Block size starts near 0.73 / qber_hint
// (clamped to [4, n]) and doubles each pass; a corrected bit re-opens
// now-odd blocks of earlier passes. A zero hint skips straight to the digest.
struct ReconcileParams {
    int passes = 6;
    uint32_t seq_base = 2; // sift and sample occupy seq 0 and 1
};

size_t reconcile_block_size(double qber_hint, size_t n);
std::vector<uint32_t> reconcile_permutation(size_t n, int pass);

struct CascadeOutcome {
    bool success = false;     // verification digest comparison passed
    Bits corrected;           // Bob's key after correction
    uint64_t leaked_bits = 0; // parity and digest bits disclosed on the channel
    std::vector<DialogueMessage> messages;
};

// Simulates both parties honestly and records Alice's message stream.
CascadeOutcome cascade_reconcile(const Bits& alice_key, const Bits& bob_key,
                                 double qber_hint, const ReconcileParams& params = {});

// Bob's private state after the quantum phase, fixed context for the
// post-processing verifier.
struct BobSessionContext {
    uint64_t n_rounds = 0;
    std::vector<uint8_t> clicked;   // per round
    std::vector<uint8_t> bob_bits;  // per round, valid where clicked
    std::vector<Basis> bob_bases;   // recorded measurement bases
    std::vector<Basis> alice_bases; // announced preparation bases
    double qber_abort_threshold = 0.11;
    int reconcile_passes = 6;

    std::vector<uint32_t> expected_sift() const;
};

// Reference defects used to grade the fuzzer. Each flag weakens exactly one
// validation; strict_digest_verification re-enables the digest length check
// regardless of the planted flag.
struct PostProcessingOptions {
    bool bug_skip_digest_length_check = false;
    bool bug_accept_reordered_parity = false;
    bool bug_pad_truncated_sift = false;
    bool strict_digest_verification = false;
};

enum class VerifierAbort : uint8_t {
    None = 0,
    UnexpectedEnd,
    MalformedMessage,
    UnexpectedType,
    BadSequence,
    BadSiftList,
    BadSampleList,
    QberThreshold,
    ParityShape,
    DigestLength,
    DigestMismatch,
    TrailingMessage,
    StepBudget,
};

const char* verifier_abort_name(VerifierAbort a);

struct VerifierResult {
    bool success = false;
    Bits key; // released reconciled key on success
    VerifierAbort abort = VerifierAbort::None;
    size_t messages_accepted = 0; // messages fully processed before stopping
    uint64_t steps = 0;
};

// Replays a (possibly mutated) dialogue against Bob's state machine.
VerifierResult run_postprocessing_verifier(const BobSessionContext& ctx,
                                           const std::vector<std::vector<uint8_t>>& dialogue,
                                           const PostProcessingOptions& options,
                                           uint64_t step_budget = 1000000);

} // namespace qrt
