#pragma once

// Deterministic mutation fuzzer for the post-processing dialogue. Verdicts
// come from a differential run: the mutated dialogue is replayed against a
// strict reference verifier and against the configured (possibly bug-flagged)
// target, so weakened validation shows up as extra acceptance.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qrt/postproc.hpp"
#include "qrt/rng.hpp"

namespace qrt {

struct BitFlip {
    uint32_t msg_index = 0;
    uint32_t bit_offset = 0;
};
struct Truncate {
    uint32_t msg_index = 0;
    uint32_t new_len = 0;
};
struct Duplicate {
    uint32_t msg_index = 0;
};
struct Reorder {
    uint32_t i = 0;
    uint32_t j = 0;
};
struct LengthCorrupt {
    uint32_t msg_index = 0;
    uint32_t declared_len = 0;
};
struct RandomSplice {
    uint32_t msg_index = 0;
    uint32_t offset = 0;
    std::vector<uint8_t> bytes;
};

using Mutation = std::variant<BitFlip, Truncate, Duplicate, Reorder, LengthCorrupt, RandomSplice>;

std::string mutation_name(const Mutation& m);

// In-bounds mutations are applied in place; anything out of bounds at
// application time is a no-op (keeps stored lists total under minimization).
bool apply_mutation(std::vector<std::vector<uint8_t>>& dialogue, const Mutation& m);

Mutation sample_mutation(const std::vector<std::vector<uint8_t>>& dialogue, RngStream& rng);

// 1-8 mutations (count geometric, p=0.5), each sampled against the dialogue
// state it lands on. Fully determined by the rng stream.
std::vector<Mutation> mutate(std::vector<std::vector<uint8_t>>& dialogue, RngStream& rng);

enum class FuzzVerdict : uint8_t {
    Pass = 0,
    CleanReject,
    KeyMismatchUndetected,
    NonTermination,
    StateDesync,
    Panic,
};

const char* fuzz_verdict_name(FuzzVerdict v);
bool is_invariant_violation(FuzzVerdict v);

struct FuzzTarget {
    BobSessionContext ctx;
    Bits alice_kept_key; // ground truth the released key must equal
    PostProcessingOptions options;
    std::vector<std::vector<uint8_t>> base_dialogue;
};

struct FuzzCase {
    uint64_t case_id = 0;
    uint64_t seed = 0;
    std::vector<Mutation> mutations;
};

struct FuzzOutcome {
    FuzzCase fc;
    FuzzVerdict verdict = FuzzVerdict::Pass;
};

std::vector<std::vector<uint8_t>> apply_case(const FuzzTarget& target, const FuzzCase& fc);

FuzzVerdict evaluate_dialogue(const FuzzTarget& target,
                              const std::vector<std::vector<uint8_t>>& dialogue,
                              uint64_t step_budget = 1000000);

// Case i mutates with seed derive_seed(master_seed, i).
std::vector<FuzzOutcome> fuzz_post_processing(const FuzzTarget& target, uint64_t n_cases,
                                              uint64_t master_seed,
                                              uint64_t step_budget = 1000000);

// Early-exit scan for the first invariant violation.
std::optional<FuzzOutcome> fuzz_until_violation(const FuzzTarget& target, uint64_t max_cases,
                                                uint64_t master_seed,
                                                uint64_t step_budget = 1000000);

// Greedy mutation removal, then splice halving; preserves the verdict.
// Throws if the input case is not an invariant violation to begin with.
FuzzCase minimize(const FuzzTarget& target, const FuzzCase& failing,
                  uint64_t step_budget = 1000000);

// Synthetic fixture whose revealed sample wildly underestimates the true
// error rate, so the honest dialogue ends in a digest mismatch. Against this
// substrate a verifier that drops the digest length check accepts truncated
// digests and releases a wrong key, which converged fixtures cannot expose.
FuzzTarget make_stressed_fuzz_target(uint64_t seed, const PostProcessingOptions& options = {});

// Self-contained replay blob: magic "QRTF", version, ids, verifier options,
// Bob's context, the base dialogue, and the mutation list.
std::vector<uint8_t> encode_replay(const FuzzTarget& target, const FuzzCase& fc,
                                   uint64_t step_budget);

struct ReplayCase {
    FuzzTarget target;
    FuzzCase fc;
    uint64_t step_budget = 1000000;
};

ReplayCase decode_replay(const std::vector<uint8_t>& blob);

void write_replay_file(const std::string& path, const FuzzTarget& target, const FuzzCase& fc,
                       uint64_t step_budget);
ReplayCase read_replay_file(const std::string& path);

} // namespace qrt
