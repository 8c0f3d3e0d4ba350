#include "qrt/state_anchor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "qrt/rng.hpp"

namespace qrt {

namespace {

uint64_t fold_digest(const Digest32& d) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : d) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace

void ValidatorSet::validate() const {
    if (members.empty()) throw std::invalid_argument("validator set: empty");
    std::set<uint32_t> ids;
    double total = 0.0;
    for (const Validator& v : members) {
        if (!(v.stake > 0.0)) throw std::invalid_argument("validator set: stake must be > 0");
        if (!ids.insert(v.id).second)
            throw std::invalid_argument("validator set: duplicate validator id");
        total += v.stake;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("validator set: stakes must sum to 1");
}

const Validator* ValidatorSet::find(uint32_t id) const {
    for (const Validator& v : members)
        if (v.id == id) return &v;
    return nullptr;
}

double ValidatorSet::stake_of(const std::vector<uint32_t>& ids) const {
    std::set<uint32_t> unique(ids.begin(), ids.end());
    double total = 0.0;
    for (uint32_t id : unique) {
        const Validator* v = find(id);
        if (!v) throw std::invalid_argument("stake_of: unknown validator id");
        total += v->stake;
    }
    return total;
}

Digest32 make_digest(uint64_t label) {
    Digest32 d{};
    RngStream rng(derive_seed(0xd16e57f00dull, label));
    for (size_t i = 0; i < d.size(); i += 8) {
        const uint64_t w = rng.next_u64();
        for (size_t j = 0; j < 8; ++j) d[i + j] = uint8_t(w >> (8 * j));
    }
    return d;
}

Attestation attest(const Validator& v, uint64_t epoch, const Digest32& digest) {
    Attestation a;
    a.epoch = epoch;
    a.state_digest = digest;
    a.validator_id = v.id;
    RngStream rng(derive_seed(v.secret, epoch, fold_digest(digest), v.id));
    for (size_t i = 0; i < a.signature.size(); i += 8) {
        const uint64_t w = rng.next_u64();
        for (size_t j = 0; j < 8; ++j) a.signature[i + j] = uint8_t(w >> (8 * j));
    }
    return a;
}

bool signature_valid(const Attestation& a, const ValidatorSet& set) {
    const Validator* v = set.find(a.validator_id);
    if (!v) return false;
    return attest(*v, a.epoch, a.state_digest).signature == a.signature;
}

AggregateResult aggregate(const std::vector<Attestation>& attestations,
                          const ValidatorSet& set, double tau) {
    set.validate();
    if (!(tau > 0.5 && tau <= 1.0))
        throw std::invalid_argument("aggregate: tau must be in (0.5, 1]");
    StateProof proof;
    std::set<uint32_t> seen;
    bool target_set = false;
    double stake = 0.0;
    for (const Attestation& a : attestations) {
        if (!signature_valid(a, set)) continue;
        if (!target_set) {
            proof.epoch = a.epoch;
            proof.state_digest = a.state_digest;
            target_set = true;
        }
        if (a.epoch != proof.epoch || a.state_digest != proof.state_digest) continue;
        if (!seen.insert(a.validator_id).second) continue;
        proof.attestations.push_back(a);
        stake += set.find(a.validator_id)->stake;
    }
    AggregateResult res;
    res.achieved_stake = stake;
    if (stake >= tau) {
        proof.attested_stake = stake;
        res.proof = std::move(proof);
    }
    return res;
}

const char* reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::None: return "none";
        case RejectReason::MixedDigest: return "mixed_digest";
        case RejectReason::DuplicateAttester: return "duplicate_attester";
        case RejectReason::BadSignature: return "bad_signature";
        case RejectReason::BelowThreshold: return "below_threshold";
    }
    return "unknown";
}

VerifyResult verify_proof(const StateProof& proof, const ValidatorSet& set, double tau) {
    set.validate();
    if (!(tau > 0.5 && tau <= 1.0))
        throw std::invalid_argument("verify_proof: tau must be in (0.5, 1]");
    VerifyResult res;
    for (const Attestation& a : proof.attestations) {
        if (a.epoch != proof.epoch || a.state_digest != proof.state_digest) {
            res.reason = RejectReason::MixedDigest;
            return res;
        }
    }
    std::set<uint32_t> seen;
    for (const Attestation& a : proof.attestations) {
        if (!seen.insert(a.validator_id).second) {
            res.reason = RejectReason::DuplicateAttester;
            return res;
        }
    }
    double stake = 0.0;
    for (const Attestation& a : proof.attestations) {
        if (!signature_valid(a, set)) {
            res.reason = RejectReason::BadSignature;
            return res;
        }
        stake += set.find(a.validator_id)->stake;
    }
    res.recomputed_stake = stake;
    if (stake < tau) {
        res.reason = RejectReason::BelowThreshold;
        return res;
    }
    res.accepted = true;
    return res;
}

ForgeResult forge_attempt(const AdversaryPower& adversary, const ValidatorSet& set,
                          uint64_t epoch, const Digest32& fake_digest, double tau) {
    set.validate();
    std::set<uint32_t> controlled(adversary.controlled.begin(), adversary.controlled.end());
    for (uint32_t id : controlled)
        if (!set.find(id)) throw std::invalid_argument("forge_attempt: unknown controlled id");

    std::vector<Attestation> forged;
    for (const Validator& v : set.members) {
        const bool owns_key = controlled.count(v.id) > 0;
        const bool breakable = adversary.quantum && v.scheme == SigScheme::Classical;
        if (owns_key || breakable) forged.push_back(attest(v, epoch, fake_digest));
    }
    AggregateResult agg = aggregate(forged, set, tau);
    ForgeResult res;
    res.achieved_stake = agg.achieved_stake;
    if (!agg.proof) return res;
    const VerifyResult v = verify_proof(*agg.proof, set, tau);
    res.success = v.accepted;
    if (v.accepted) res.proof = std::move(agg.proof);
    return res;
}

std::vector<uint8_t> serialize_proof(const StateProof& proof) {
    std::vector<uint8_t> out;
    out.reserve(44 + proof.attestations.size() * 36);
    for (int i = 7; i >= 0; --i) out.push_back(uint8_t(proof.epoch >> (8 * i)));
    out.insert(out.end(), proof.state_digest.begin(), proof.state_digest.end());
    const uint32_t count = uint32_t(proof.attestations.size());
    for (int i = 3; i >= 0; --i) out.push_back(uint8_t(count >> (8 * i)));
    for (const Attestation& a : proof.attestations) {
        for (int i = 3; i >= 0; --i) out.push_back(uint8_t(a.validator_id >> (8 * i)));
        out.insert(out.end(), a.signature.begin(), a.signature.end());
    }
    return out;
}

std::string proof_digest(const StateProof& proof) {
    const std::vector<uint8_t> bytes = serialize_proof(proof);
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace qrt
