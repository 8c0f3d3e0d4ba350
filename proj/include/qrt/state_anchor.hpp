#pragma once

// Stake-weighted epoch attestations: validators sign a state digest, an
// untrusted coordinator aggregates, and anyone can re-verify against a
// supermajority threshold. Signatures are deterministic keyed tags checked
// by recomputation; a quantum-capable adversary can mint tags for Classical
// validators but not PostQuantum ones.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qrt {

using Digest32 = std::array<uint8_t, 32>;
using SigTag = std::array<uint8_t, 32>;

enum class SigScheme : uint8_t { Classical = 0, PostQuantum = 1 };

struct Validator {
    uint32_t id = 0;
    double stake = 0.0; // normalized, set-wide sum must be 1
    SigScheme scheme = SigScheme::PostQuantum;
    uint64_t secret = 0;
};

struct ValidatorSet {
    std::vector<Validator> members;

    // unique ids, positive stakes, total 1 +- 1e-9
    void validate() const;
    const Validator* find(uint32_t id) const;
    double stake_of(const std::vector<uint32_t>& ids) const;
};

struct Attestation {
    uint64_t epoch = 0;
    Digest32 state_digest{};
    uint32_t validator_id = 0;
    SigTag signature{};
};

struct StateProof {
    uint64_t epoch = 0;
    Digest32 state_digest{};
    std::vector<Attestation> attestations;
    double attested_stake = 0.0; // aggregator's claim; verifiers recompute
};

struct AdversaryPower {
    std::vector<uint32_t> controlled;
    bool quantum = false;
};

Digest32 make_digest(uint64_t label);

Attestation attest(const Validator& v, uint64_t epoch, const Digest32& digest);

bool signature_valid(const Attestation& a, const ValidatorSet& set);

struct AggregateResult {
    std::optional<StateProof> proof; // set iff attested stake reached tau
    double achieved_stake = 0.0;
};

// Drops invalid signatures, duplicate attesters, and attestations for a
// different (epoch, digest) than the first valid one.
AggregateResult aggregate(const std::vector<Attestation>& attestations,
                          const ValidatorSet& set, double tau);

enum class RejectReason : uint8_t {
    None = 0,
    MixedDigest,
    DuplicateAttester,
    BadSignature,
    BelowThreshold,
};

const char* reject_reason_name(RejectReason r);

struct VerifyResult {
    bool accepted = false;
    RejectReason reason = RejectReason::None;
    double recomputed_stake = 0.0;
};

// Trusts nothing from the aggregator: checks digest consistency, then
// duplicates, then every signature, then the recomputed stake against tau
// (inclusive). The proof's own attested_stake field is ignored.
VerifyResult verify_proof(const StateProof& proof, const ValidatorSet& set, double tau);

struct ForgeResult {
    bool success = false;
    std::optional<StateProof> proof;
    double achieved_stake = 0.0;
};

// Controlled validators sign the fake digest; a quantum adversary also
// forges every non-controlled Classical validator. Succeeds iff the
// resulting proof verifies.
ForgeResult forge_attempt(const AdversaryPower& adversary, const ValidatorSet& set,
                          uint64_t epoch, const Digest32& fake_digest, double tau);

// Canonical layout: epoch u64 BE | digest 32B | count u32 BE |
// per attestation: validator_id u32 BE | signature 32B.
std::vector<uint8_t> serialize_proof(const StateProof& proof);

// FNV-1a over the canonical bytes, 16 hex digits.
std::string proof_digest(const StateProof& proof);

} // namespace qrt
