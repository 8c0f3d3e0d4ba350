#include "qrt/fuzzer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace qrt {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    __builtin_memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

void put_packed(std::vector<uint8_t>& out, const std::vector<uint8_t>& bits) {
    put_u32(out, uint32_t(bits.size()));
    std::vector<uint8_t> packed((bits.size() + 7) / 8, 0);
    for (size_t i = 0; i < bits.size(); ++i)
        if (bits[i] & 1) packed[i >> 3] |= uint8_t(1u << (i & 7));
    out.insert(out.end(), packed.begin(), packed.end());
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > b.size()) throw std::invalid_argument("replay blob: truncated");
    }
    uint8_t u8() {
        need(1);
        return b[pos++];
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(b[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double v;
        __builtin_memcpy(&v, &bits, 8);
        return v;
    }
    std::vector<uint8_t> packed_bits() {
        const uint32_t n = u32();
        if (n > (1u << 26)) throw std::invalid_argument("replay blob: bit vector too large");
        const size_t nbytes = (size_t(n) + 7) / 8;
        need(nbytes);
        std::vector<uint8_t> bits(n);
        for (uint32_t i = 0; i < n; ++i) bits[i] = (b[pos + (i >> 3)] >> (i & 7)) & 1;
        pos += nbytes;
        return bits;
    }
    std::vector<uint8_t> blob() {
        const uint32_t n = u32();
        if (n > (1u << 26)) throw std::invalid_argument("replay blob: message too large");
        need(n);
        std::vector<uint8_t> out(b.begin() + long(pos), b.begin() + long(pos + n));
        pos += n;
        return out;
    }
};

} // namespace

std::string mutation_name(const Mutation& m) {
    struct Namer {
        std::string operator()(const BitFlip&) const { return "bit_flip"; }
        std::string operator()(const Truncate&) const { return "truncate"; }
        std::string operator()(const Duplicate&) const { return "duplicate"; }
        std::string operator()(const Reorder&) const { return "reorder"; }
        std::string operator()(const LengthCorrupt&) const { return "length_corrupt"; }
        std::string operator()(const RandomSplice&) const { return "random_splice"; }
    };
    return std::visit(Namer{}, m);
}

bool apply_mutation(std::vector<std::vector<uint8_t>>& dialogue, const Mutation& m) {
    const size_t n = dialogue.size();
    if (std::holds_alternative<BitFlip>(m)) {
        const auto& f = std::get<BitFlip>(m);
        if (f.msg_index >= n || dialogue[f.msg_index].empty()) return false;
        auto& msg = dialogue[f.msg_index];
        const size_t bit = f.bit_offset % (msg.size() * 8);
        msg[bit >> 3] ^= uint8_t(1u << (bit & 7));
        return true;
    }
    if (std::holds_alternative<Truncate>(m)) {
        const auto& t = std::get<Truncate>(m);
        if (t.msg_index >= n) return false;
        auto& msg = dialogue[t.msg_index];
        if (t.new_len >= msg.size()) return false;
        msg.resize(t.new_len);
        return true;
    }
    if (std::holds_alternative<Duplicate>(m)) {
        const auto& d = std::get<Duplicate>(m);
        if (d.msg_index >= n) return false;
        const std::vector<uint8_t> copy = dialogue[d.msg_index];
        dialogue.insert(dialogue.begin() + long(d.msg_index) + 1, copy);
        return true;
    }
    if (std::holds_alternative<Reorder>(m)) {
        const auto& r = std::get<Reorder>(m);
        if (r.i >= n || r.j >= n || r.i == r.j) return false;
        std::swap(dialogue[r.i], dialogue[r.j]);
        return true;
    }
    if (std::holds_alternative<LengthCorrupt>(m)) {
        const auto& l = std::get<LengthCorrupt>(m);
        if (l.msg_index >= n || dialogue[l.msg_index].size() < 9) return false;
        auto& msg = dialogue[l.msg_index];
        for (int i = 0; i < 4; ++i) msg[5 + i] = uint8_t(l.declared_len >> (8 * i));
        return true;
    }
    const auto& s = std::get<RandomSplice>(m);
    if (s.msg_index >= n || s.bytes.empty()) return false;
    auto& msg = dialogue[s.msg_index];
    const size_t off = std::min<size_t>(s.offset, msg.size());
    if (off + s.bytes.size() > msg.size()) msg.resize(off + s.bytes.size());
    std::copy(s.bytes.begin(), s.bytes.end(), msg.begin() + long(off));
    return true;
}

Mutation sample_mutation(const std::vector<std::vector<uint8_t>>& dialogue, RngStream& rng) {
    const uint32_t n = uint32_t(dialogue.size());
    const uint32_t idx = uint32_t(rng.below(n));
    const uint32_t len = uint32_t(dialogue[idx].size());
    switch (rng.below(6)) {
        case 0: return BitFlip{idx, uint32_t(rng.below(std::max<uint64_t>(1, uint64_t(len) * 8)))};
        case 1: return Truncate{idx, uint32_t(rng.below(len + 1))};
        case 2: return Duplicate{idx};
        case 3: return Reorder{idx, uint32_t(rng.below(n))};
        case 4: {
            const uint32_t declared =
                rng.bernoulli(0.5) ? uint32_t(rng.below(len + 64)) : uint32_t(rng.next_u64());
            return LengthCorrupt{idx, declared};
        }
        default: {
            RandomSplice s{idx, uint32_t(rng.below(len + 1)), {}};
            const size_t k = 1 + size_t(rng.below(8));
            for (size_t i = 0; i < k; ++i) s.bytes.push_back(uint8_t(rng.below(256)));
            return s;
        }
    }
}

std::vector<Mutation> mutate(std::vector<std::vector<uint8_t>>& dialogue, RngStream& rng) {
    if (dialogue.empty()) throw std::invalid_argument("mutate: dialogue must be non-empty");
    size_t count = 1;
    while (count < 8 && rng.bernoulli(0.5)) ++count;
    std::vector<Mutation> applied;
    applied.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        Mutation m = sample_mutation(dialogue, rng);
        apply_mutation(dialogue, m);
        applied.push_back(std::move(m));
    }
    return applied;
}

const char* fuzz_verdict_name(FuzzVerdict v) {
    switch (v) {
        case FuzzVerdict::Pass: return "pass";
        case FuzzVerdict::CleanReject: return "clean_reject";
        case FuzzVerdict::KeyMismatchUndetected: return "key_mismatch_undetected";
        case FuzzVerdict::NonTermination: return "non_termination";
        case FuzzVerdict::StateDesync: return "state_desync";
        case FuzzVerdict::Panic: return "panic";
    }
    return "unknown";
}

bool is_invariant_violation(FuzzVerdict v) {
    return v == FuzzVerdict::KeyMismatchUndetected || v == FuzzVerdict::NonTermination ||
           v == FuzzVerdict::StateDesync || v == FuzzVerdict::Panic;
}

std::vector<std::vector<uint8_t>> apply_case(const FuzzTarget& target, const FuzzCase& fc) {
    std::vector<std::vector<uint8_t>> dialogue = target.base_dialogue;
    for (const Mutation& m : fc.mutations) apply_mutation(dialogue, m);
    return dialogue;
}

FuzzVerdict evaluate_dialogue(const FuzzTarget& target,
                              const std::vector<std::vector<uint8_t>>& dialogue,
                              uint64_t step_budget) {
    VerifierResult tgt;
    try {
        tgt = run_postprocessing_verifier(target.ctx, dialogue, target.options, step_budget);
    } catch (const std::exception&) {
        return FuzzVerdict::Panic;
    }
    if (tgt.abort == VerifierAbort::StepBudget) return FuzzVerdict::NonTermination;
    if (tgt.success && tgt.key != target.alice_kept_key) return FuzzVerdict::KeyMismatchUndetected;

    const PostProcessingOptions strict{}; // reference run: every check enabled
    const VerifierResult ref =
        run_postprocessing_verifier(target.ctx, dialogue, strict, step_budget);
    if (tgt.success && !ref.success) return FuzzVerdict::StateDesync;
    if (!tgt.success && tgt.messages_accepted > ref.messages_accepted)
        return FuzzVerdict::StateDesync;
    return tgt.success ? FuzzVerdict::Pass : FuzzVerdict::CleanReject;
}

std::vector<FuzzOutcome> fuzz_post_processing(const FuzzTarget& target, uint64_t n_cases,
                                              uint64_t master_seed, uint64_t step_budget) {
    if (target.base_dialogue.empty())
        throw std::invalid_argument("fuzz: target has no base dialogue");
    std::vector<FuzzOutcome> outcomes;
    outcomes.reserve(n_cases);
    for (uint64_t i = 0; i < n_cases; ++i) {
        FuzzOutcome out;
        out.fc.case_id = i;
        out.fc.seed = derive_seed(master_seed, i);
        RngStream rng(out.fc.seed);
        std::vector<std::vector<uint8_t>> dialogue = target.base_dialogue;
        out.fc.mutations = mutate(dialogue, rng);
        out.verdict = evaluate_dialogue(target, dialogue, step_budget);
        outcomes.push_back(std::move(out));
    }
    return outcomes;
}

std::optional<FuzzOutcome> fuzz_until_violation(const FuzzTarget& target, uint64_t max_cases,
                                                uint64_t master_seed, uint64_t step_budget) {
    if (target.base_dialogue.empty())
        throw std::invalid_argument("fuzz: target has no base dialogue");
    for (uint64_t i = 0; i < max_cases; ++i) {
        FuzzOutcome out;
        out.fc.case_id = i;
        out.fc.seed = derive_seed(master_seed, i);
        RngStream rng(out.fc.seed);
        std::vector<std::vector<uint8_t>> dialogue = target.base_dialogue;
        out.fc.mutations = mutate(dialogue, rng);
        out.verdict = evaluate_dialogue(target, dialogue, step_budget);
        if (is_invariant_violation(out.verdict)) return out;
    }
    return std::nullopt;
}

FuzzCase minimize(const FuzzTarget& target, const FuzzCase& failing, uint64_t step_budget) {
    const FuzzVerdict want = evaluate_dialogue(target, apply_case(target, failing), step_budget);
    if (!is_invariant_violation(want))
        throw std::runtime_error("minimize: case does not reproduce an invariant violation");

    FuzzCase cur = failing;
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < cur.mutations.size(); ++i) {
            FuzzCase trial = cur;
            trial.mutations.erase(trial.mutations.begin() + long(i));
            if (evaluate_dialogue(target, apply_case(target, trial), step_budget) == want) {
                cur = std::move(trial);
                changed = true;
                break;
            }
        }
    }
    for (Mutation& m : cur.mutations) {
        if (!std::holds_alternative<RandomSplice>(m)) continue;
        auto& bytes = std::get<RandomSplice>(m).bytes;
        while (bytes.size() > 1) {
            std::vector<uint8_t> saved = bytes;
            bytes.resize(bytes.size() / 2);
            if (evaluate_dialogue(target, apply_case(target, cur), step_budget) == want) continue;
            bytes = std::move(saved);
            break;
        }
    }
    return cur;
}

FuzzTarget make_stressed_fuzz_target(uint64_t seed, const PostProcessingOptions& options) {
    constexpr uint32_t kRounds = 400;
    constexpr uint32_t kRevealed = 100;
    constexpr uint32_t kHiddenErrors = 75; // 25% of the kept region
    RngStream rng(seed);

    FuzzTarget t;
    t.options = options;
    t.ctx.n_rounds = kRounds;
    t.ctx.clicked.assign(kRounds, 1);
    t.ctx.bob_bases.assign(kRounds, Basis::Rectilinear);
    t.ctx.alice_bases.assign(kRounds, Basis::Rectilinear);
    t.ctx.qber_abort_threshold = 0.11;
    t.ctx.reconcile_passes = 1; // too little correction power for the kept region

    Bits alice(kRounds);
    for (auto& b : alice) b = rng.bit();
    Bits bob = alice;
    bob[10] ^= 1; // the revealed sample sees 2 errors in 100: well under threshold
    bob[55] ^= 1;
    std::vector<uint32_t> kept_pos(kRounds - kRevealed);
    for (uint32_t i = 0; i < kept_pos.size(); ++i) kept_pos[i] = kRevealed + i;
    for (uint32_t i = 0; i < kHiddenErrors; ++i) {
        const uint32_t j = i + uint32_t(rng.below(kept_pos.size() - i));
        std::swap(kept_pos[i], kept_pos[j]);
        bob[kept_pos[i]] ^= 1;
    }
    t.ctx.bob_bits = bob;

    std::vector<uint32_t> sift_rounds(kRounds);
    for (uint32_t i = 0; i < kRounds; ++i) sift_rounds[i] = i;
    std::vector<uint32_t> sample_positions(kRevealed);
    for (uint32_t i = 0; i < kRevealed; ++i) sample_positions[i] = i;
    const Bits revealed(alice.begin(), alice.begin() + kRevealed);

    t.alice_kept_key.assign(alice.begin() + kRevealed, alice.end());
    const Bits bob_kept(bob.begin() + kRevealed, bob.end());

    // the recorder must run at the verifier's estimate so block schedules match
    const double estimate = 2.0 / double(kRevealed);
    ReconcileParams params;
    params.passes = t.ctx.reconcile_passes;
    const CascadeOutcome cascade = cascade_reconcile(t.alice_kept_key, bob_kept, estimate, params);

    t.base_dialogue.push_back(encode_message(make_sift_message(sift_rounds)));
    t.base_dialogue.push_back(encode_message(make_sample_message(sample_positions, revealed)));
    for (const DialogueMessage& m : cascade.messages)
        t.base_dialogue.push_back(encode_message(m));
    return t;
}

std::vector<uint8_t> encode_replay(const FuzzTarget& target, const FuzzCase& fc,
                                   uint64_t step_budget) {
    std::vector<uint8_t> out = {'Q', 'R', 'T', 'F', 1};
    put_u64(out, fc.case_id);
    put_u64(out, fc.seed);
    put_u64(out, step_budget);
    uint8_t flags = 0;
    if (target.options.bug_skip_digest_length_check) flags |= 1;
    if (target.options.bug_accept_reordered_parity) flags |= 2;
    if (target.options.bug_pad_truncated_sift) flags |= 4;
    if (target.options.strict_digest_verification) flags |= 8;
    out.push_back(flags);

    put_u64(out, target.ctx.n_rounds);
    put_f64(out, target.ctx.qber_abort_threshold);
    put_u32(out, uint32_t(target.ctx.reconcile_passes));
    put_packed(out, target.ctx.clicked);
    put_packed(out, target.ctx.bob_bits);
    std::vector<uint8_t> bases;
    for (Basis b : target.ctx.bob_bases) bases.push_back(b == Basis::Diagonal);
    put_packed(out, bases);
    bases.clear();
    for (Basis b : target.ctx.alice_bases) bases.push_back(b == Basis::Diagonal);
    put_packed(out, bases);
    put_packed(out, target.alice_kept_key);

    put_u32(out, uint32_t(target.base_dialogue.size()));
    for (const auto& msg : target.base_dialogue) {
        put_u32(out, uint32_t(msg.size()));
        out.insert(out.end(), msg.begin(), msg.end());
    }

    put_u32(out, uint32_t(fc.mutations.size()));
    for (const Mutation& m : fc.mutations) {
        if (const auto* f = std::get_if<BitFlip>(&m)) {
            out.push_back(0);
            put_u32(out, f->msg_index);
            put_u32(out, f->bit_offset);
        } else if (const auto* t = std::get_if<Truncate>(&m)) {
            out.push_back(1);
            put_u32(out, t->msg_index);
            put_u32(out, t->new_len);
        } else if (const auto* d = std::get_if<Duplicate>(&m)) {
            out.push_back(2);
            put_u32(out, d->msg_index);
        } else if (const auto* r = std::get_if<Reorder>(&m)) {
            out.push_back(3);
            put_u32(out, r->i);
            put_u32(out, r->j);
        } else if (const auto* l = std::get_if<LengthCorrupt>(&m)) {
            out.push_back(4);
            put_u32(out, l->msg_index);
            put_u32(out, l->declared_len);
        } else {
            const auto& s = std::get<RandomSplice>(m);
            out.push_back(5);
            put_u32(out, s.msg_index);
            put_u32(out, s.offset);
            put_u32(out, uint32_t(s.bytes.size()));
            out.insert(out.end(), s.bytes.begin(), s.bytes.end());
        }
    }
    return out;
}

ReplayCase decode_replay(const std::vector<uint8_t>& blob) {
    Reader rd{blob};
    if (blob.size() < 5 || blob[0] != 'Q' || blob[1] != 'R' || blob[2] != 'T' || blob[3] != 'F')
        throw std::invalid_argument("replay blob: bad magic");
    rd.pos = 4;
    if (rd.u8() != 1) throw std::invalid_argument("replay blob: unsupported version");

    ReplayCase rc;
    rc.fc.case_id = rd.u64();
    rc.fc.seed = rd.u64();
    rc.step_budget = rd.u64();
    const uint8_t flags = rd.u8();
    rc.target.options.bug_skip_digest_length_check = flags & 1;
    rc.target.options.bug_accept_reordered_parity = flags & 2;
    rc.target.options.bug_pad_truncated_sift = flags & 4;
    rc.target.options.strict_digest_verification = flags & 8;

    rc.target.ctx.n_rounds = rd.u64();
    rc.target.ctx.qber_abort_threshold = rd.f64();
    rc.target.ctx.reconcile_passes = int(rd.u32());
    rc.target.ctx.clicked = rd.packed_bits();
    rc.target.ctx.bob_bits = rd.packed_bits();
    for (uint8_t b : rd.packed_bits())
        rc.target.ctx.bob_bases.push_back(b ? Basis::Diagonal : Basis::Rectilinear);
    for (uint8_t b : rd.packed_bits())
        rc.target.ctx.alice_bases.push_back(b ? Basis::Diagonal : Basis::Rectilinear);
    rc.target.alice_kept_key = rd.packed_bits();

    const uint32_t n_msgs = rd.u32();
    if (n_msgs > (1u << 22)) throw std::invalid_argument("replay blob: dialogue too large");
    for (uint32_t i = 0; i < n_msgs; ++i) rc.target.base_dialogue.push_back(rd.blob());

    const uint32_t n_mut = rd.u32();
    if (n_mut > (1u << 16)) throw std::invalid_argument("replay blob: mutation list too large");
    for (uint32_t i = 0; i < n_mut; ++i) {
        switch (rd.u8()) {
            case 0: {
                BitFlip f;
                f.msg_index = rd.u32();
                f.bit_offset = rd.u32();
                rc.fc.mutations.push_back(f);
                break;
            }
            case 1: {
                Truncate t;
                t.msg_index = rd.u32();
                t.new_len = rd.u32();
                rc.fc.mutations.push_back(t);
                break;
            }
            case 2: {
                Duplicate d;
                d.msg_index = rd.u32();
                rc.fc.mutations.push_back(d);
                break;
            }
            case 3: {
                Reorder r;
                r.i = rd.u32();
                r.j = rd.u32();
                rc.fc.mutations.push_back(r);
                break;
            }
            case 4: {
                LengthCorrupt l;
                l.msg_index = rd.u32();
                l.declared_len = rd.u32();
                rc.fc.mutations.push_back(l);
                break;
            }
            case 5: {
                RandomSplice s;
                s.msg_index = rd.u32();
                s.offset = rd.u32();
                s.bytes = rd.blob();
                rc.fc.mutations.push_back(std::move(s));
                break;
            }
            default: throw std::invalid_argument("replay blob: unknown mutation tag");
        }
    }
    if (rd.pos != blob.size()) throw std::invalid_argument("replay blob: trailing bytes");
    return rc;
}

void write_replay_file(const std::string& path, const FuzzTarget& target, const FuzzCase& fc,
                       uint64_t step_budget) {
    const std::vector<uint8_t> blob = encode_replay(target, fc, step_budget);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open replay file for writing: " + path);
    out.write(reinterpret_cast<const char*>(blob.data()), long(blob.size()));
    if (!out) throw std::runtime_error("failed to write replay file: " + path);
}

ReplayCase read_replay_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open replay file: " + path);
    std::vector<uint8_t> blob((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
    return decode_replay(blob);
}

} // namespace qrt
